#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "surro/evaluation.hpp"
#include "surro/trainer.hpp"

namespace surro {

// Shortest round-trip decimal form; the same double always prints the same
// bytes, so rerunning a command reproduces files exactly.
std::string fmt(double v);

// Write-to-temp-then-rename so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j);

std::string trajectory_csv(const AggregateTrajectory& y);

std::string dataset_csv(const Dataset& data);
Dataset parse_dataset_csv(std::string_view text);
void write_dataset_csv(const std::filesystem::path& path, const Dataset& data);
Dataset read_dataset_csv(const std::filesystem::path& path);

nlohmann::json checkpoint_json(const TrainedPair& pair);
TrainedPair checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const std::filesystem::path& path, const TrainedPair& pair);
TrainedPair load_checkpoint(const std::filesystem::path& path);

std::string table_csv(std::span<const MetricsRow> rows);
std::string counterfactual_csv(const CounterfactualCurves& curves);
nlohmann::json bound_report_json(std::span<const BoundCheck> checks, int grid_points);

std::string eta_name(EtaDistribution::Type type);
EtaDistribution::Type eta_from_name(std::string_view name);

} // namespace surro
