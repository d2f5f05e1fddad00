#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "surro/tensor.hpp"

namespace surro::ad {

// log(n!), exact table-backed accumulation, deterministic across runs.
double log_factorial(int n);

struct Node {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode gradient tape. Values are computed eagerly as nodes are
// recorded; backward() replays the records in reverse and accumulates
// gradients for every node that (transitively) depends on a leaf.
//
// Conventions:
//  - linear() follows y = x W^T + b with W shaped [out, in], so one weight
//    tensor serves any batch size;
//  - log-pmf ops emit one column per batch row and yield -inf for outcomes
//    outside the support instead of NaN;
//  - weighted_sum() reduces a column to a scalar with fixed weights, which is
//    how records with -inf likelihood are kept out of a batch objective
//    (weight zero) without poisoning the gradient.
class Tape {
public:
    // Inputs. Leaves get gradients; constants never do.
    Node leaf(Tensor t);
    Node constant(Tensor t);

    // y = x W^T + b. x: [B, in], w: [out, in], b: [1, out] -> [B, out].
    Node linear(Node x, Node w, Node b);

    Node relu(Node x);
    Node sigmoid(Node x);
    Node tanh_(Node x);

    Node add(Node a, Node b);      // same shape
    Node mul(Node a, Node b);      // elementwise, same shape
    Node affine(Node x, double scale, double shift);

    // One explicit Euler step of the SIRS rates. z: [B, 3] states,
    // theta: [B, 3] parameters (alpha, beta, gamma).
    Node sirs_euler_step(Node z, Node theta, double dt);

    // Per-row simplex guard: rows already in the simplex (within 1e-9 mass
    // error and no negative or >1 component) pass through untouched; other
    // rows are clamped to [0, 1] and renormalised, and clamp_events() counts
    // them.
    Node clamp_simplex(Node z);

    // Multinomial log-pmf of per-row counts. probs rows must sum to ~1;
    // logits rows are normalised internally via log-sum-exp. Output [B, 1].
    Node mn_logpmf_probs(const std::vector<std::array<int, 3>>& counts, Node probs);
    Node mn_logpmf_logits(const std::vector<std::array<int, 3>>& counts, Node logits);

    // sum_b w[b] * x[b, 0] -> [1, 1]. Weights are fixed (not differentiated).
    Node weighted_sum(Node x, Tensor w);

    void backward(Node loss);

    const Tensor& val(Node n) const;
    const Tensor& grad(Node n) const; // zero tensor if the node got no gradient

    std::size_t size() const { return vals_.size(); }
    long clamp_events() const { return clamp_events_; }

private:
    enum class OpKind {
        Leaf, Constant, Linear, Relu, Sigmoid, Tanh, Add, Mul, Affine,
        SirsStep, ClampSimplex, MnProbs, MnLogits, WeightedSum
    };

    struct Record {
        OpKind kind;
        int a = -1, b = -1, c = -1;
        double s0 = 0.0, s1 = 0.0;
        int aux = -1;
    };

    Node push(OpKind kind, Tensor val, int a = -1, int b = -1, int c = -1);
    void check(Node n) const;
    bool needs_grad(int id) const { return requires_[static_cast<std::size_t>(id)]; }
    Tensor& grad_buf(int id);
    void backstep(std::size_t i);

    std::vector<Record> recs_;
    std::vector<Tensor> vals_;
    std::vector<Tensor> grads_;
    std::vector<char> requires_;
    std::vector<std::vector<std::array<int, 3>>> aux_counts_;
    std::vector<Tensor> aux_tensors_;
    long clamp_events_ = 0;
    bool backward_done_ = false;
};

} // namespace surro::ad
