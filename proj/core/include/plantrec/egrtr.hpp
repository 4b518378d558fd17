#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "plantrec/tensor.hpp"

namespace plantrec {

namespace egrtr {

struct LinearLayer {
  Eigen::MatrixXd w;  // out x in
  Eigen::VectorXd b;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const {
    return (x * w.transpose()).rowwise() + b.transpose();
  }
};

struct Mlp {
  Eigen::MatrixXd w1;  // hidden x in
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // out x hidden
  Eigen::VectorXd b2;
};

struct AttentionWeights {
  Eigen::MatrixXd wq, wk, wv, wo;  // d x d
  Eigen::VectorXd bq, bk, bv, bo;
};

struct FeedForward {
  Eigen::MatrixXd w1;  // hidden x d
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // d x hidden
  Eigen::VectorXd b2;
};

struct RelDecoderLayer {
  AttentionWeights self_attn;
  AttentionWeights cross_attn;
  FeedForward ffn;
};

struct HeadDims {
  int n = 0;             // object queries
  int d_model = 0;
  int num_z_layers = 0;  // L: decoder layers feeding local relations
  int n_rel_layers = 0;
  int heads = 0;
  int hidden = 0;
  int n_rel_classes = 0;  // |Y_T|

  bool operator==(const HeadDims&) const = default;
};

struct RelationHeadState {
  HeadDims dims;
  LinearLayer proj_q, proj_k, proj_sub, proj_obj, proj_enc, proj_dec;
  Eigen::MatrixXd pe_dec;       // N x d, learnable table
  Eigen::MatrixXd rel_queries;  // N x d
  std::vector<RelDecoderLayer> layers;
  Mlp mlp_gate;  // 3d -> hidden -> 1
  Mlp mlp_rel;   // 3d -> hidden -> |Y_T|
  Mlp mlp_conn;  // 3d -> hidden -> 1
  std::uint64_t seed = 0;
};

/// Encoder features plus the decoder's intermediate and final object
/// representations Z^0..Z^L.
struct DecoderTrace {
  Eigen::MatrixXd f_enc;           // enc_token_count x d
  std::vector<Eigen::MatrixXd> z;  // L+1 matrices, each N x d
};

/// Pair tensors are stored as N^2 x dim matrices, row p = i*N + j.
struct LocalRelations {
  std::vector<Eigen::MatrixXd> r_a;  // L matrices, N^2 x 2d
  Eigen::MatrixXd r_z;               // N^2 x 2d
};

struct GatedFusion {
  std::vector<Eigen::MatrixXd> r_tilde;  // L+1 matrices, N^2 x 3d
  Eigen::MatrixXd fused;                 // N^2 x 3d
  Eigen::MatrixXd gates;                 // (L+1) x N^2, entries in (0,1)
};

struct GraphPredictions {
  Tensor3 g_rel;           // N x N x |Y_T|
  Eigen::MatrixXd g_conn;  // N x N
};

struct RelationTensors {
  LocalRelations local;
  std::vector<Eigen::MatrixXd> r_prime;  // L+1 broadcast expert layers, N^2 x d
  Eigen::MatrixXd experts;               // (L+1) x d
  GatedFusion fusion;
  GraphPredictions graphs;
};

/// Weights uniform in (-1/sqrt(fan_in), +1/sqrt(fan_in)) from a counter-based
/// generator keyed by seed; biases zero. Requires n >= L+1 and h | d_model.
RelationHeadState init_state(int n, int d_model, int num_z_layers, int n_rel_layers,
                             int heads, int hidden, int n_rel_classes, std::uint64_t seed);

/// Interleaved sin/cos over positions, frequency base 10000; d_model even.
Eigen::MatrixXd sinusoidal_pe(int count, int d_model);

LocalRelations build_local_relations(const DecoderTrace& trace, const RelationHeadState& state);

/// Full processed relational queries (N x d). Positional encodings can be
/// switched off to expose the set semantics of cross-attention.
Eigen::MatrixXd rel_transformer_all(const DecoderTrace& trace, const RelationHeadState& state,
                                    bool with_positional_encodings = true);

/// First L+1 rows of rel_transformer_all: the experts.
Eigen::MatrixXd rel_transformer_forward(const DecoderTrace& trace,
                                        const RelationHeadState& state,
                                        bool with_positional_encodings = true);

GatedFusion gated_fusion(const LocalRelations& local, const Eigen::MatrixXd& experts,
                         const RelationHeadState& state);

GraphPredictions predict_graphs(const Eigen::MatrixXd& fused, const RelationHeadState& state);

/// Whole head in one call; also materializes the broadcast expert layers.
RelationTensors head_forward(const DecoderTrace& trace, const RelationHeadState& state);

struct HeadGradients {
  Mlp mlp_gate, mlp_rel, mlp_conn;        // same shapes as the parameters
  std::vector<Eigen::MatrixXd> d_r_tilde;  // L+1 matrices, N^2 x 3d
  Eigen::MatrixXd d_experts;               // N x d; rows beyond L stay zero
};

/// Analytic gradients through gating and the two output MLPs for the scalar
/// loss sum(upstream_rel .* g_rel) + sum(upstream_conn .* g_conn).
HeadGradients head_backward(const std::vector<Eigen::MatrixXd>& r_tilde,
                            const RelationHeadState& state,
                            const Eigen::MatrixXd& upstream_rel,   // N^2 x |Y_T|
                            const Eigen::VectorXd& upstream_conn);  // N^2

DecoderTrace random_trace(int n, int enc_token_count, int d_model, int num_z_layers,
                          std::uint64_t seed);

/// Head loss sum(g_rel) + sum(g_conn) for the given fused-path inputs.
double head_loss(const std::vector<Eigen::MatrixXd>& r_tilde, const RelationHeadState& state);

/// Central finite differences (given step) over every gate/head MLP
/// parameter against head_backward; returns the max relative error.
double gradient_check(const RelationHeadState& state,
                      const std::vector<Eigen::MatrixXd>& r_tilde, double step);

std::string serialize_head_state(const RelationHeadState& state);
RelationHeadState parse_head_state(const std::string& bytes);

}  // namespace egrtr

}  // namespace plantrec
