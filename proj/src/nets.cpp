#include "surro/nets.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace surro {

std::size_t parameter_count(const FeedForwardSpec& spec) {
    std::size_t total = 0;
    for (int i = 0; i + 1 < static_cast<int>(spec.widths.size()); ++i) {
        std::size_t in = spec.widths[i], out = spec.widths[i + 1];
        total += in * out + out;
    }
    return total;
}

std::size_t parameter_count(const GruSpec& spec) {
    std::size_t in = spec.input, h = spec.hidden;
    return 3 * (in * h + h * h + 2 * h);
}

ad::Tensor& ParameterStore::add(const std::string& name, ad::Tensor t) {
    if (has(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    items_.emplace_back(name, std::move(t));
    return items_.back().second;
}

const ad::Tensor& ParameterStore::get(std::string_view name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return t;
    throw std::out_of_range("unknown parameter: " + std::string(name));
}

ad::Tensor& ParameterStore::get(std::string_view name) {
    return const_cast<ad::Tensor&>(static_cast<const ParameterStore*>(this)->get(name));
}

bool ParameterStore::has(std::string_view name) const {
    for (const auto& [n, t] : items_)
        if (n == name) return true;
    return false;
}

std::size_t ParameterStore::scalar_count() const {
    std::size_t total = 0;
    for (const auto& [n, t] : items_) total += t.size();
    return total;
}

std::vector<double> ParameterStore::flatten() const {
    std::vector<double> flat;
    flat.reserve(scalar_count());
    for (const auto& [n, t] : items_) flat.insert(flat.end(), t.v.begin(), t.v.end());
    return flat;
}

void ParameterStore::unflatten(std::span<const double> flat) {
    if (flat.size() != scalar_count())
        throw std::invalid_argument("unflatten: size mismatch");
    std::size_t off = 0;
    for (auto& [n, t] : items_) {
        std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.v.begin());
        off += t.size();
    }
}

namespace {

ad::Tensor uniform_tensor(std::size_t rows, std::size_t cols, double bound, RngStream& rng) {
    ad::Tensor t(rows, cols);
    for (double& v : t.v) v = (2.0 * rng.uniform() - 1.0) * bound;
    return t;
}

} // namespace

void init_feed_forward(ParameterStore& store, const std::string& prefix,
                       const FeedForwardSpec& spec, RngStream& rng) {
    for (int i = 0; i + 1 < static_cast<int>(spec.widths.size()); ++i) {
        std::size_t in = spec.widths[i], out = spec.widths[i + 1];
        double bound = 1.0 / std::sqrt(static_cast<double>(in));
        store.add(prefix + ".w" + std::to_string(i), uniform_tensor(out, in, bound, rng));
        store.add(prefix + ".b" + std::to_string(i), ad::Tensor(1, out));
    }
}

void init_gru(ParameterStore& store, const std::string& prefix, const GruSpec& spec,
              RngStream& rng) {
    std::size_t in = spec.input, h = spec.hidden;
    double bi = 1.0 / std::sqrt(static_cast<double>(in));
    double bh = 1.0 / std::sqrt(static_cast<double>(h));
    for (const char* gate : {"r", "u", "n"}) {
        std::string g(gate);
        store.add(prefix + ".w_" + g, uniform_tensor(h, in, bi, rng));
        store.add(prefix + ".u_" + g, uniform_tensor(h, h, bh, rng));
        store.add(prefix + ".b_" + g, ad::Tensor(1, h));
        store.add(prefix + ".c_" + g, ad::Tensor(1, h));
    }
}

ad::Node StoreLeaves::at(std::string_view name) const {
    for (std::size_t i = 0; i < store->items().size(); ++i)
        if (store->items()[i].first == name) return nodes[i];
    throw std::out_of_range("unknown parameter: " + std::string(name));
}

StoreLeaves register_store(ad::Tape& tape, const ParameterStore& store) {
    StoreLeaves leaves;
    leaves.store = &store;
    leaves.nodes.reserve(store.tensor_count());
    for (const auto& [name, t] : store.items()) leaves.nodes.push_back(tape.leaf(t));
    return leaves;
}

std::vector<double> collect_grads(const ad::Tape& tape, const StoreLeaves& leaves) {
    std::vector<double> flat;
    flat.reserve(leaves.store->scalar_count());
    for (ad::Node n : leaves.nodes) {
        const ad::Tensor& g = tape.grad(n);
        flat.insert(flat.end(), g.v.begin(), g.v.end());
    }
    return flat;
}

ad::Node ff_forward(ad::Tape& tape, const FeedForwardSpec& spec, const StoreLeaves& leaves,
                    const std::string& prefix, ad::Node x) {
    ad::Node h = x;
    for (int i = 0; i < spec.layers(); ++i) {
        std::string idx = std::to_string(i);
        h = tape.linear(h, leaves.at(prefix + ".w" + idx), leaves.at(prefix + ".b" + idx));
        if (i + 1 < spec.layers())
            h = tape.relu(h);
        else if (spec.output == FeedForwardSpec::Output::Sigmoid)
            h = tape.sigmoid(h);
    }
    return h;
}

ad::Node gru_step(ad::Tape& tape, const StoreLeaves& leaves, const std::string& prefix,
                  ad::Node x, ad::Node h) {
    auto gate = [&](const std::string& g) {
        return tape.add(
            tape.linear(x, leaves.at(prefix + ".w_" + g), leaves.at(prefix + ".b_" + g)),
            tape.linear(h, leaves.at(prefix + ".u_" + g), leaves.at(prefix + ".c_" + g)));
    };
    ad::Node r = tape.sigmoid(gate("r"));
    ad::Node u = tape.sigmoid(gate("u"));
    ad::Node n = tape.tanh_(tape.add(
        tape.linear(x, leaves.at(prefix + ".w_n"), leaves.at(prefix + ".b_n")),
        tape.mul(r, tape.linear(h, leaves.at(prefix + ".u_n"), leaves.at(prefix + ".c_n")))));
    return tape.add(tape.mul(tape.affine(u, -1.0, 1.0), h), tape.mul(u, n));
}

std::vector<double> ff_eval(const FeedForwardSpec& spec, const ParameterStore& store,
                            const std::string& prefix, std::span<const double> x) {
    std::vector<double> cur(x.begin(), x.end());
    for (int i = 0; i < spec.layers(); ++i) {
        std::string idx = std::to_string(i);
        const ad::Tensor& w = store.get(prefix + ".w" + idx);
        const ad::Tensor& b = store.get(prefix + ".b" + idx);
        if (cur.size() != w.cols) throw std::invalid_argument("ff_eval: input width mismatch");
        std::vector<double> next(w.rows);
        for (std::size_t o = 0; o < w.rows; ++o) {
            double acc = b.v[o];
            for (std::size_t k = 0; k < w.cols; ++k) acc += w.v[o * w.cols + k] * cur[k];
            next[o] = acc;
        }
        if (i + 1 < spec.layers()) {
            for (double& v : next) v = v > 0.0 ? v : 0.0;
        } else if (spec.output == FeedForwardSpec::Output::Sigmoid) {
            for (double& v : next) v = 1.0 / (1.0 + std::exp(-v));
        }
        cur = std::move(next);
    }
    return cur;
}

} // namespace surro
