#include "surro/io.hpp"

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace surro {

namespace {

std::string fmt_u64(std::uint64_t v) { return std::to_string(v); }

double parse_double(std::string_view s) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::invalid_argument("bad number: " + std::string(s));
    return v;
}

long parse_long(std::string_view s) {
    long v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::invalid_argument("bad integer: " + std::string(s));
    return v;
}

std::uint64_t parse_u64(std::string_view s) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw std::invalid_argument("bad seed: " + std::string(s));
    return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            out.push_back(text.substr(start));
            break;
        }
        out.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

nlohmann::json tensor_json(const std::string& name, const ad::Tensor& t) {
    return nlohmann::json{{"name", name},
                          {"rows", t.rows},
                          {"cols", t.cols},
                          {"data", t.v}};
}

void load_store(const nlohmann::json& arr, ParameterStore& store, const char* which) {
    if (!arr.is_array() || arr.size() != store.tensor_count())
        throw std::invalid_argument(std::string("checkpoint: wrong tensor count for ") + which);
    for (const auto& tj : arr) {
        std::string name = tj.at("name").get<std::string>();
        ad::Tensor& t = store.get(name);
        if (tj.at("rows").get<std::size_t>() != t.rows ||
            tj.at("cols").get<std::size_t>() != t.cols)
            throw std::invalid_argument("checkpoint: shape mismatch for " + name);
        std::vector<double> data = tj.at("data").get<std::vector<double>>();
        if (data.size() != t.size())
            throw std::invalid_argument("checkpoint: data length mismatch for " + name);
        t.v = std::move(data);
    }
}

} // namespace

std::string fmt(double v) {
    char buf[40];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw std::runtime_error("number formatting failed");
    return std::string(buf, p);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& j) {
    write_file_atomic(path, j.dump(2) + "\n");
}

std::string trajectory_csv(const AggregateTrajectory& y) {
    std::string out = "t,S,I,R\n";
    for (std::size_t t = 0; t < y.counts.size(); ++t) {
        out += std::to_string(t);
        for (int j = 0; j < 3; ++j) {
            out += ',';
            out += std::to_string(y.counts[t][j]);
        }
        out += '\n';
    }
    return out;
}

std::string eta_name(EtaDistribution::Type type) {
    return type == EtaDistribution::Type::UniformUnion ? "union" : "init";
}

EtaDistribution::Type eta_from_name(std::string_view name) {
    if (name == "union") return EtaDistribution::Type::UniformUnion;
    if (name == "init") return EtaDistribution::Type::UniformInit;
    throw std::invalid_argument("unknown eta: " + std::string(name));
}

std::string dataset_csv(const Dataset& data) {
    const DatasetHeader& h = data.header;
    std::string out = "# side=" + std::to_string(h.side) +
                      " horizon=" + std::to_string(h.horizon) +
                      " agents=" + std::to_string(h.agents) + " eta=" + eta_name(h.eta.type) +
                      " p_lock=" + fmt(h.eta.p_lock) + " seed=" + fmt_u64(h.seed) + "\n";
    out += "kind,alpha,beta,gamma,a,t_lock";
    for (int t = 0; t <= h.horizon; ++t) {
        std::string ts = std::to_string(t);
        out += ",S" + ts + ",I" + ts + ",R" + ts;
    }
    out += '\n';
    for (const Record& rec : data.records) {
        out += rec.iota.kind == InterventionKind::InitLock ? "init_lock" : "init";
        out += ',' + fmt(rec.iota.v.alpha) + ',' + fmt(rec.iota.v.beta) + ',' +
               fmt(rec.iota.v.gamma) + ',' + fmt(rec.iota.a) + ',' +
               std::to_string(rec.iota.kind == InterventionKind::InitLock ? rec.iota.t_lock : -1);
        for (const auto& c : rec.y.counts)
            for (int j = 0; j < 3; ++j) out += ',' + std::to_string(c[j]);
        out += '\n';
    }
    return out;
}

Dataset parse_dataset_csv(std::string_view text) {
    auto rows = lines_of(text);
    if (rows.size() < 2 || rows[0].substr(0, 2) != "# ")
        throw std::invalid_argument("dataset: missing metadata line");
    Dataset data;
    for (std::string_view field : split(rows[0].substr(2), ' ')) {
        auto kv = split(field, '=');
        if (kv.size() != 2) throw std::invalid_argument("dataset: bad metadata field");
        std::string_view key = kv[0], val = kv[1];
        if (key == "side")
            data.header.side = static_cast<int>(parse_long(val));
        else if (key == "horizon")
            data.header.horizon = static_cast<int>(parse_long(val));
        else if (key == "agents")
            data.header.agents = static_cast<int>(parse_long(val));
        else if (key == "eta")
            data.header.eta.type = eta_from_name(val);
        else if (key == "p_lock")
            data.header.eta.p_lock = parse_double(val);
        else if (key == "seed")
            data.header.seed = parse_u64(val);
        else
            throw std::invalid_argument("dataset: unknown metadata key " + std::string(key));
    }
    if (rows[1].substr(0, 5) != "kind,")
        throw std::invalid_argument("dataset: missing column header");
    int horizon = data.header.horizon;
    std::size_t expected = 6 + 3 * static_cast<std::size_t>(horizon + 1);
    for (std::size_t i = 2; i < rows.size(); ++i) {
        if (rows[i].empty()) continue;
        auto fields = split(rows[i], ',');
        if (fields.size() != expected)
            throw std::invalid_argument("dataset: wrong column count on row " +
                                        std::to_string(i + 1));
        Record rec;
        if (fields[0] == "init_lock")
            rec.iota.kind = InterventionKind::InitLock;
        else if (fields[0] == "init")
            rec.iota.kind = InterventionKind::Init;
        else
            throw std::invalid_argument("dataset: unknown intervention kind");
        rec.iota.v.alpha = parse_double(fields[1]);
        rec.iota.v.beta = parse_double(fields[2]);
        rec.iota.v.gamma = parse_double(fields[3]);
        rec.iota.a = parse_double(fields[4]);
        rec.iota.t_lock = static_cast<int>(parse_long(fields[5]));
        rec.y.counts.resize(horizon + 1);
        for (int t = 0; t <= horizon; ++t)
            for (int j = 0; j < 3; ++j)
                rec.y.counts[t][j] = static_cast<int>(parse_long(fields[6 + 3 * t + j]));
        data.records.push_back(std::move(rec));
    }
    return data;
}

void write_dataset_csv(const std::filesystem::path& path, const Dataset& data) {
    write_file_atomic(path, dataset_csv(data));
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_dataset_csv(text);
}

nlohmann::json checkpoint_json(const TrainedPair& pair) {
    nlohmann::json psi = nlohmann::json::array();
    for (const auto& [name, t] : pair.model.psi.items()) psi.push_back(tensor_json(name, t));
    nlohmann::json phi = nlohmann::json::array();
    for (const auto& [name, t] : pair.phi.items()) phi.push_back(tensor_json(name, t));
    return nlohmann::json{{"kind", "surrogate-checkpoint"},
                          {"family", to_string(pair.model.family)},
                          {"agents", pair.model.agents},
                          {"horizon", pair.model.horizon},
                          {"psi_scalars", pair.model.psi.scalar_count()},
                          {"phi_scalars", pair.phi.scalar_count()},
                          {"psi", std::move(psi)},
                          {"phi", std::move(phi)}};
}

TrainedPair checkpoint_from_json(const nlohmann::json& j) {
    if (j.value("kind", "") != "surrogate-checkpoint")
        throw std::invalid_argument("checkpoint: wrong file kind");
    Family family = family_from_string(j.at("family").get<std::string>());
    int agents = j.at("agents").get<int>();
    int horizon = j.at("horizon").get<int>();

    TrainedPair pair;
    RngStream scratch(0);
    pair.model = make_model(family, agents, horizon, scratch);
    pair.phi = make_omega_params(family, scratch);

    std::size_t psi_expect = psi_parameter_count(family);
    std::size_t phi_expect = parameter_count(omega_spec(family));
    if (j.at("psi_scalars").get<std::size_t>() != psi_expect ||
        j.at("phi_scalars").get<std::size_t>() != phi_expect)
        throw std::invalid_argument("checkpoint: parameter counts do not match the family");

    load_store(j.at("psi"), pair.model.psi, "psi");
    load_store(j.at("phi"), pair.phi, "phi");
    if (pair.model.psi.scalar_count() != psi_expect || pair.phi.scalar_count() != phi_expect)
        throw std::invalid_argument("checkpoint: parameter counts do not match the family");
    return pair;
}

void save_checkpoint(const std::filesystem::path& path, const TrainedPair& pair) {
    write_json_atomic(path, checkpoint_json(pair));
}

TrainedPair load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    nlohmann::json j = nlohmann::json::parse(in);
    return checkpoint_from_json(j);
}

std::string table_csv(std::span<const MetricsRow> rows) {
    std::string out = "family,train_eta,test_eta,anll_q1,anll_med,anll_q3,"
                      "amse_q1,amse_med,amse_q3,infinite_records\n";
    for (const MetricsRow& r : rows) {
        out += to_string(r.family) + ',' + eta_name(r.train_eta) + ',' + eta_name(r.test_eta) +
               ',' + fmt(r.anll_q.q1) + ',' + fmt(r.anll_q.med) + ',' + fmt(r.anll_q.q3) + ',' +
               fmt(r.amse_q.q1) + ',' + fmt(r.amse_q.med) + ',' + fmt(r.amse_q.q3) + ',' +
               std::to_string(r.infinite_records) + '\n';
    }
    return out;
}

std::string counterfactual_csv(const CounterfactualCurves& curves) {
    std::string out = "t,abm_mean_I_lock,abm_mean_I_nolock,"
                      "surrogate_mean_I_lock,surrogate_mean_I_nolock\n";
    for (std::size_t t = 0; t < curves.abm_lock.size(); ++t) {
        out += std::to_string(t) + ',' + fmt(curves.abm_lock[t]) + ',' +
               fmt(curves.abm_nolock[t]) + ',' + fmt(curves.sur_lock[t]) + ',' +
               fmt(curves.sur_nolock[t]) + '\n';
    }
    return out;
}

nlohmann::json bound_report_json(std::span<const BoundCheck> checks, int grid_points) {
    nlohmann::json arr = nlohmann::json::array();
    bool all = true;
    for (const BoundCheck& c : checks) {
        all = all && c.holds;
        arr.push_back(nlohmann::json{{"epsilon", c.epsilon},
                                     {"mass_exceeding", c.mass_exceeding},
                                     {"expected_ce", c.expected_ce},
                                     {"bound", c.bound},
                                     {"holds", c.holds}});
    }
    return nlohmann::json{{"kind", "markov-bound-report"},
                          {"grid_points", grid_points},
                          {"checks", std::move(arr)},
                          {"all_hold", all}};
}

} // namespace surro
