#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "surro/rng.hpp"
#include "surro/tape.hpp"
#include "surro/tensor.hpp"

namespace surro {

// Fully connected net: widths[0] inputs through widths.back() outputs, ReLU
// between layers, output activation as configured.
struct FeedForwardSpec {
    enum class Output { Identity, Sigmoid };
    std::vector<int> widths;
    Output output = Output::Identity;

    int layers() const { return static_cast<int>(widths.size()) - 1; }
};

// Gated recurrent unit, update-gate form:
//   r = sig(W_r x + b_r + U_r h + c_r)
//   u = sig(W_u x + b_u + U_u h + c_u)
//   n = tanh(W_n x + b_n + r . (U_n h + c_n))
//   h' = (1 - u) . h + u . n
// Input- and hidden-side biases are kept separate.
struct GruSpec {
    int input = 0;
    int hidden = 0;
};

std::size_t parameter_count(const FeedForwardSpec& spec);
std::size_t parameter_count(const GruSpec& spec);

// Named tensors in insertion order. flatten()/unflatten() expose one flat
// view for optimisers and finite differencing.
class ParameterStore {
public:
    ad::Tensor& add(const std::string& name, ad::Tensor t);
    const ad::Tensor& get(std::string_view name) const;
    ad::Tensor& get(std::string_view name);
    bool has(std::string_view name) const;

    std::size_t tensor_count() const { return items_.size(); }
    std::size_t scalar_count() const;
    const std::vector<std::pair<std::string, ad::Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, ad::Tensor>>& items() { return items_; }

    std::vector<double> flatten() const;
    void unflatten(std::span<const double> flat);

private:
    std::vector<std::pair<std::string, ad::Tensor>> items_;
};

// Weights drawn uniformly from +-1/sqrt(fan_in); biases start at zero.
void init_feed_forward(ParameterStore& store, const std::string& prefix,
                       const FeedForwardSpec& spec, RngStream& rng);
void init_gru(ParameterStore& store, const std::string& prefix, const GruSpec& spec,
              RngStream& rng);

// Tape-side registration: one leaf per tensor, aligned with store order, so
// collect_grads() matches ParameterStore::flatten().
struct StoreLeaves {
    const ParameterStore* store = nullptr;
    std::vector<ad::Node> nodes;

    ad::Node at(std::string_view name) const;
};

StoreLeaves register_store(ad::Tape& tape, const ParameterStore& store);
std::vector<double> collect_grads(const ad::Tape& tape, const StoreLeaves& leaves);

ad::Node ff_forward(ad::Tape& tape, const FeedForwardSpec& spec, const StoreLeaves& leaves,
                    const std::string& prefix, ad::Node x);
ad::Node gru_step(ad::Tape& tape, const StoreLeaves& leaves, const std::string& prefix,
                  ad::Node x, ad::Node h);

// Value-only forward pass for a single input row.
std::vector<double> ff_eval(const FeedForwardSpec& spec, const ParameterStore& store,
                            const std::string& prefix, std::span<const double> x);

} // namespace surro
