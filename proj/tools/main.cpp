#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "surro/evaluation.hpp"
#include "surro/io.hpp"
#include "surro/oracle.hpp"
#include "surro/surrogate.hpp"
#include "surro/trainer.hpp"

namespace {

using nlohmann::json;
using namespace surro;

std::string manifest_path(const std::string& explicit_path, const std::string& primary_out) {
    return explicit_path.empty() ? primary_out + ".manifest.json" : explicit_path;
}

void write_manifest(const std::string& path, const char* command, json config, json outputs,
                    json results) {
    json m{{"command", command},
           {"config", std::move(config)},
           {"outputs", std::move(outputs)},
           {"results", std::move(results)}};
    write_json_atomic(path, m);
}

struct InterventionFlags {
    double alpha = 0.5, beta = 0.5, gamma = 0.5, a = 0.1;
    int lock_at = -1;

    void attach(CLI::App* cmd) {
        cmd->add_option("--alpha", alpha, "Infection rate in [0, 1]");
        cmd->add_option("--beta", beta, "Recovery rate in [0, 1]");
        cmd->add_option("--gamma", gamma, "Waning rate in [0, 1]");
        cmd->add_option("--a", a, "Initial infection probability in [0, 1]");
        cmd->add_option("--lock-at", lock_at,
                        "Lockdown start in {5..10}; omit for no lockdown");
    }

    AbmIntervention build() const {
        AbmIntervention iota;
        iota.v = ParamVector{alpha, beta, gamma};
        iota.a = a;
        if (lock_at >= 0) {
            iota.kind = InterventionKind::InitLock;
            iota.t_lock = lock_at;
        }
        return iota;
    }

    json to_json() const {
        return json{{"alpha", alpha}, {"beta", beta}, {"gamma", gamma}, {"a", a},
                    {"lock_at", lock_at}};
    }
};

int run_simulate(int side, int horizon, const InterventionFlags& iv, std::uint64_t seed,
                 const std::string& out, const std::string& manifest) {
    LatticeConfig cfg{side, horizon};
    AbmIntervention iota = iv.build();
    AbmSchedule sched = apply_to_abm(iota, horizon);
    RngStream rng(seed);
    AggregateTrajectory y = aggregate(simulate(cfg, sched, rng));
    write_file_atomic(out, trajectory_csv(y));
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "simulate",
                   json{{"side", side}, {"horizon", horizon}, {"seed", seed},
                        {"intervention", iv.to_json()}},
                   json::array({out}), json{{"steps", y.counts.size()}});
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_gen_data(int side, int horizon, const std::string& eta_str, double p_lock, int count,
                 std::uint64_t seed, int jobs, const std::string& out,
                 const std::string& manifest) {
    LatticeConfig cfg{side, horizon};
    EtaDistribution eta{eta_from_name(eta_str), p_lock};
    Dataset data = generate_dataset(cfg, eta, count, seed, jobs);
    write_dataset_csv(out, data);
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "gen-data",
                   json{{"side", side}, {"horizon", horizon}, {"eta", eta_str},
                        {"p_lock", p_lock}, {"count", count}, {"seed", seed}, {"jobs", jobs}},
                   json::array({out}), json{{"records", data.records.size()}});
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_train(const std::string& data_path, const std::string& family_str, TrainConfig tc,
              const std::string& prefix, const std::string& manifest) {
    Dataset data = read_dataset_csv(data_path);
    Family family = family_from_string(family_str);
    std::vector<SplitResult> splits = train(family, data, tc);

    json outputs = json::array();
    json split_reports = json::array();
    for (const SplitResult& sr : splits) {
        TrainedPair pair;
        pair.model.family = family;
        pair.model.agents = data.header.agents;
        pair.model.horizon = data.header.horizon;
        pair.model.psi = sr.psi;
        pair.phi = sr.phi;
        std::string path = prefix + "-s" + std::to_string(sr.split) + ".json";
        save_checkpoint(path, pair);
        outputs.push_back(path);
        split_reports.push_back(json{{"split", sr.split},
                                     {"checkpoint_epoch", sr.checkpoint_epoch},
                                     {"best_epoch", sr.best_epoch},
                                     {"stopped_epoch", sr.stopped_epoch},
                                     {"best_val", sr.best_val},
                                     {"excluded_records", sr.excluded_records},
                                     {"skipped_steps", sr.skipped_steps},
                                     {"train_curve", sr.train_curve},
                                     {"val_curve", sr.val_curve}});
    }
    std::string mpath = manifest_path(manifest, prefix);
    write_manifest(mpath, "train",
                   json{{"data", data_path}, {"family", family_str},
                        {"lr", tc.lr}, {"max_epochs", tc.max_epochs},
                        {"batch_size", tc.batch_size}, {"patience", tc.patience},
                        {"train_size", tc.train_size}, {"val_size", tc.val_size},
                        {"splits", tc.splits}, {"seed", tc.seed}},
                   outputs, json{{"splits", std::move(split_reports)}});
    std::cout << "wrote " << splits.size() << " checkpoints at " << prefix << "-s*.json\n";
    return 0;
}

int run_eval(const std::string& data_path, const std::string& ckpt_path, std::uint64_t eval_seed,
             int samples, const std::string& out, const std::string& manifest) {
    Dataset data = read_dataset_csv(data_path);
    TrainedPair pair = load_checkpoint(ckpt_path);
    if (pair.model.agents != data.header.agents || pair.model.horizon != data.header.horizon)
        throw std::runtime_error("checkpoint and dataset disagree on agents or horizon");
    AnllResult a = anll(pair, data.records);
    double mse = amse(pair, data.records, eval_seed, samples);
    json report{{"kind", "eval-report"},
                {"family", to_string(pair.model.family)},
                {"records", data.records.size()},
                {"anll", a.value},
                {"infinite_records", a.infinite_records},
                {"amse", mse}};
    write_json_atomic(out, report);
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "eval",
                   json{{"data", data_path}, {"checkpoint", ckpt_path},
                        {"eval_seed", eval_seed}, {"samples", samples}},
                   json::array({out}), report);
    std::cout << "anll " << fmt(a.value) << " amse " << fmt(mse) << "\n";
    return 0;
}

int run_table(TableConfig cfg, const std::string& out, const std::string& manifest) {
    std::vector<MetricsRow> rows = reproduce_table(cfg);
    write_file_atomic(out, table_csv(rows));
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "table",
                   json{{"side", cfg.lattice.side}, {"horizon", cfg.lattice.horizon},
                        {"train_records", cfg.train_records},
                        {"test_records", cfg.test_records}, {"p_lock", cfg.p_lock},
                        {"data_seed", cfg.data_seed}, {"train_seed", cfg.train.seed},
                        {"eval_seed", cfg.eval_seed}, {"splits", cfg.train.splits},
                        {"max_epochs", cfg.train.max_epochs},
                        {"train_size", cfg.train.train_size},
                        {"val_size", cfg.train.val_size},
                        {"amse_samples", cfg.amse_samples}, {"jobs", cfg.jobs}},
                   json::array({out}), json{{"rows", rows.size()}});
    std::cout << "wrote " << out << "\n";
    return 0;
}

int run_counterfactual(const std::string& ckpt_path, int side, int horizon,
                       const InterventionFlags& iv, int runs, std::uint64_t seed,
                       const std::string& out, const std::string& manifest) {
    TrainedPair pair = load_checkpoint(ckpt_path);
    LatticeConfig cfg{side, horizon};
    if (pair.model.agents != cfg.agents() || pair.model.horizon != horizon)
        throw std::runtime_error("checkpoint and lattice flags disagree");
    AbmIntervention iota = iv.build();
    CounterfactualCurves curves = lockdown_counterfactual(pair, cfg, iota, runs, seed);
    CounterfactualGap gap = counterfactual_gap(curves);
    write_file_atomic(out, counterfactual_csv(curves));
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "counterfactual",
                   json{{"checkpoint", ckpt_path}, {"side", side}, {"horizon", horizon},
                        {"runs", runs}, {"seed", seed}, {"intervention", iv.to_json()}},
                   json::array({out}),
                   json{{"abm_gap", gap.abm}, {"surrogate_gap", gap.surrogate}});
    std::cout << "abm gap " << fmt(gap.abm) << " surrogate gap " << fmt(gap.surrogate) << "\n";
    return 0;
}

int run_oracle(int side, int horizon, const InterventionFlags& iv, std::uint64_t budget,
               const std::string& out, const std::string& manifest) {
    LatticeConfig cfg{side, horizon};
    AbmIntervention iota = iv.build();
    PushforwardResult dist = exact_pushforward(cfg, apply_to_abm(iota, horizon), budget);
    std::string csv;
    for (int t = 0; t <= horizon; ++t) {
        std::string ts = std::to_string(t);
        csv += "S" + ts + ",I" + ts + ",R" + ts + ",";
    }
    csv += "probability\n";
    for (const auto& [y, mass] : dist.outcomes) {
        for (const auto& c : y.counts)
            for (int j = 0; j < 3; ++j) csv += std::to_string(c[j]) + ',';
        csv += fmt(mass) + '\n';
    }
    write_file_atomic(out, csv);
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "oracle",
                   json{{"side", side}, {"horizon", horizon}, {"budget", budget},
                        {"intervention", iv.to_json()}},
                   json::array({out}),
                   json{{"outcomes", dist.outcomes.size()},
                        {"total_mass", dist.total_mass},
                        {"paths_visited", dist.paths_visited}});
    std::cout << dist.outcomes.size() << " outcomes, total mass " << fmt(dist.total_mass)
              << "\n";
    return 0;
}

int run_gradcheck(const std::string& family_str, int side, int horizon, int records,
                  std::uint64_t seed, double step, double rel_tol, int stride,
                  const std::string& out, const std::string& manifest) {
    GradCheckConfig cfg;
    cfg.family = family_from_string(family_str);
    cfg.lattice = LatticeConfig{side, horizon};
    cfg.records = records;
    cfg.seed = seed;
    cfg.step = step;
    cfg.rel_tol = rel_tol;
    cfg.stride = stride;
    GradCheckResult res = gradient_check(cfg);
    json report{{"kind", "gradcheck-report"},
                {"family", family_str},
                {"coords", res.coords},
                {"failed", res.failed},
                {"max_rel_err", res.max_rel_err},
                {"max_abs_err", res.max_abs_err},
                {"value", res.value},
                {"passed", res.passed},
                {"tier_double", res.tier_double},
                {"tier_long", res.tier_long},
                {"tier_quad", res.tier_quad}};
    write_json_atomic(out, report);
    std::string mpath = manifest_path(manifest, out);
    write_manifest(mpath, "gradcheck",
                   json{{"family", family_str}, {"side", side}, {"horizon", horizon},
                        {"records", records}, {"seed", seed}, {"step", step},
                        {"rel_tol", rel_tol}, {"stride", stride}},
                   json::array({out}), report);
    std::cout << (res.passed ? "passed" : "FAILED") << ": max rel err " << fmt(res.max_rel_err)
              << ", max abs err " << fmt(res.max_abs_err) << "\n";
    return res.passed ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Interventionally consistent surrogate models for a lattice SIRS simulator"};
    app.require_subcommand(1);

    int exit_code = 0;

    // simulate
    {
        auto* cmd = app.add_subcommand("simulate", "Run the agent simulator once");
        auto side = std::make_shared<int>(10);
        auto horizon = std::make_shared<int>(20);
        auto iv = std::make_shared<InterventionFlags>();
        auto seed = std::make_shared<std::uint64_t>(1);
        auto out = std::make_shared<std::string>("trajectory.csv");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--side", *side, "Lattice side length");
        cmd->add_option("--horizon", *horizon, "Number of transitions");
        iv->attach(cmd);
        cmd->add_option("--seed", *seed, "Stream seed");
        cmd->add_option("--out", *out, "Trajectory CSV path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_simulate(*side, *horizon, *iv, *seed, *out, *manifest);
        });
    }

    // gen-data
    {
        auto* cmd = app.add_subcommand("gen-data", "Sample interventions and simulate records");
        auto side = std::make_shared<int>(10);
        auto horizon = std::make_shared<int>(20);
        auto eta = std::make_shared<std::string>("union");
        auto p_lock = std::make_shared<double>(0.5);
        auto count = std::make_shared<int>(1000);
        auto seed = std::make_shared<std::uint64_t>(1);
        auto jobs = std::make_shared<int>(1);
        auto out = std::make_shared<std::string>("dataset.csv");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--side", *side, "Lattice side length");
        cmd->add_option("--horizon", *horizon, "Number of transitions");
        cmd->add_option("--eta", *eta, "Intervention distribution: union or init")
            ->check(CLI::IsMember({"union", "init"}));
        cmd->add_option("--p-lock", *p_lock, "Lockdown probability under union");
        cmd->add_option("--count", *count, "Records to generate");
        cmd->add_option("--seed", *seed, "Master seed");
        cmd->add_option("--jobs", *jobs, "Worker threads");
        cmd->add_option("--out", *out, "Dataset CSV path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_gen_data(*side, *horizon, *eta, *p_lock, *count, *seed, *jobs, *out,
                                     *manifest);
        });
    }

    // train
    {
        auto* cmd = app.add_subcommand("train", "Fit a surrogate family to a dataset");
        auto data = std::make_shared<std::string>();
        auto family = std::make_shared<std::string>("lodernn");
        auto tc = std::make_shared<TrainConfig>();
        auto prefix = std::make_shared<std::string>("checkpoint");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--data", *data, "Training dataset CSV")->required();
        cmd->add_option("--family", *family, "Surrogate family")
            ->check(CLI::IsMember({"lode", "lodernn", "lrnn"}));
        cmd->add_option("--lr", tc->lr, "Learning rate");
        cmd->add_option("--max-epochs", tc->max_epochs, "Epoch cap");
        cmd->add_option("--batch-size", tc->batch_size, "Records per gradient step");
        cmd->add_option("--patience", tc->patience, "Early-stopping patience");
        cmd->add_option("--train-size", tc->train_size, "Training records per split");
        cmd->add_option("--val-size", tc->val_size, "Validation records per split");
        cmd->add_option("--splits", tc->splits, "Independent splits to train");
        cmd->add_option("--seed", tc->seed, "Training master seed");
        cmd->add_option("--out-prefix", *prefix, "Checkpoint path prefix");
        cmd->add_option("--manifest", *manifest,
                        "Manifest path (default <out-prefix>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_train(*data, *family, *tc, *prefix, *manifest);
        });
    }

    // eval
    {
        auto* cmd = app.add_subcommand("eval", "Score a checkpoint on a dataset");
        auto data = std::make_shared<std::string>();
        auto ckpt = std::make_shared<std::string>();
        auto eval_seed = std::make_shared<std::uint64_t>(2);
        auto samples = std::make_shared<int>(1);
        auto out = std::make_shared<std::string>("metrics.json");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--data", *data, "Test dataset CSV")->required();
        cmd->add_option("--checkpoint", *ckpt, "Checkpoint JSON")->required();
        cmd->add_option("--eval-seed", *eval_seed, "Sampling seed for the squared error");
        cmd->add_option("--samples", *samples, "Surrogate samples per record");
        cmd->add_option("--out", *out, "Metrics JSON path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_eval(*data, *ckpt, *eval_seed, *samples, *out, *manifest);
        });
    }

    // table
    {
        auto* cmd = app.add_subcommand("table",
                                       "Train all families in both regimes and tabulate metrics");
        auto cfg = std::make_shared<TableConfig>();
        auto out = std::make_shared<std::string>("table.csv");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--side", cfg->lattice.side, "Lattice side length");
        cmd->add_option("--horizon", cfg->lattice.horizon, "Number of transitions");
        cmd->add_option("--train-records", cfg->train_records, "Training dataset size");
        cmd->add_option("--test-records", cfg->test_records, "Test dataset size");
        cmd->add_option("--p-lock", cfg->p_lock, "Lockdown probability under union");
        cmd->add_option("--data-seed", cfg->data_seed, "Dataset master seed");
        cmd->add_option("--train-seed", cfg->train.seed, "Training master seed");
        cmd->add_option("--eval-seed", cfg->eval_seed, "Evaluation sampling seed");
        cmd->add_option("--max-epochs", cfg->train.max_epochs, "Epoch cap");
        cmd->add_option("--patience", cfg->train.patience, "Early-stopping patience");
        cmd->add_option("--splits", cfg->train.splits, "Splits per family and regime");
        cmd->add_option("--train-size", cfg->train.train_size, "Training records per split");
        cmd->add_option("--val-size", cfg->train.val_size, "Validation records per split");
        cmd->add_option("--samples", cfg->amse_samples, "Surrogate samples per record");
        cmd->add_option("--jobs", cfg->jobs, "Worker threads for data generation");
        cmd->add_option("--out", *out, "Table CSV path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] { exit_code = run_table(*cfg, *out, *manifest); });
    }

    // counterfactual
    {
        auto* cmd = app.add_subcommand("counterfactual",
                                       "Compare lockdown vs no-lockdown infected curves");
        auto ckpt = std::make_shared<std::string>();
        auto side = std::make_shared<int>(10);
        auto horizon = std::make_shared<int>(20);
        auto iv = std::make_shared<InterventionFlags>();
        auto runs = std::make_shared<int>(2000);
        auto seed = std::make_shared<std::uint64_t>(3);
        auto out = std::make_shared<std::string>("counterfactual.csv");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--checkpoint", *ckpt, "Checkpoint JSON")->required();
        cmd->add_option("--side", *side, "Lattice side length");
        cmd->add_option("--horizon", *horizon, "Number of transitions");
        iv->attach(cmd);
        cmd->add_option("--runs", *runs, "Simulator runs per arm");
        cmd->add_option("--seed", *seed, "Simulator stream seed");
        cmd->add_option("--out", *out, "Curves CSV path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_counterfactual(*ckpt, *side, *horizon, *iv, *runs, *seed, *out,
                                           *manifest);
        });
    }

    // oracle
    {
        auto* cmd = app.add_subcommand("oracle",
                                       "Enumerate the exact aggregate distribution (small models)");
        auto side = std::make_shared<int>(2);
        auto horizon = std::make_shared<int>(3);
        auto iv = std::make_shared<InterventionFlags>();
        auto budget = std::make_shared<std::uint64_t>(80'000'000);
        auto out = std::make_shared<std::string>("pushforward.csv");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--side", *side, "Lattice side length");
        cmd->add_option("--horizon", *horizon, "Number of transitions");
        iv->attach(cmd);
        cmd->add_option("--budget", *budget, "Enumeration node budget");
        cmd->add_option("--out", *out, "Distribution CSV path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_oracle(*side, *horizon, *iv, *budget, *out, *manifest);
        });
    }

    // gradcheck
    {
        auto* cmd = app.add_subcommand("gradcheck",
                                       "Compare objective gradients against finite differences");
        auto family = std::make_shared<std::string>("lode");
        auto side = std::make_shared<int>(10);
        auto horizon = std::make_shared<int>(20);
        auto records = std::make_shared<int>(10);
        auto seed = std::make_shared<std::uint64_t>(4);
        auto step = std::make_shared<double>(1e-8);
        auto rel_tol = std::make_shared<double>(1e-4);
        auto stride = std::make_shared<int>(1);
        auto out = std::make_shared<std::string>("gradcheck.json");
        auto manifest = std::make_shared<std::string>();
        cmd->add_option("--family", *family, "Surrogate family")
            ->check(CLI::IsMember({"lode", "lodernn", "lrnn"}));
        cmd->add_option("--side", *side, "Lattice side length");
        cmd->add_option("--horizon", *horizon, "Number of transitions");
        cmd->add_option("--records", *records, "Records in the batch");
        cmd->add_option("--seed", *seed, "Record and parameter seed");
        cmd->add_option("--step", *step, "Base finite-difference half-width");
        cmd->add_option("--rel-tol", *rel_tol, "Relative error tolerance");
        cmd->add_option("--stride", *stride, "Check every stride-th coordinate");
        cmd->add_option("--out", *out, "Report JSON path");
        cmd->add_option("--manifest", *manifest, "Manifest path (default <out>.manifest.json)");
        cmd->callback([=, &exit_code] {
            exit_code = run_gradcheck(*family, *side, *horizon, *records, *seed, *step, *rel_tol,
                                      *stride, *out, *manifest);
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        nlohmann::json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 2;
    } catch (const std::exception& e) {
        nlohmann::json err{{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return exit_code;
}
