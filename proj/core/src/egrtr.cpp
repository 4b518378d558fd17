#include "plantrec/egrtr.hpp"

#include <cmath>

#include <json.hpp>

#include "plantrec/model.hpp"
#include "plantrec/rng.hpp"

namespace plantrec {
namespace egrtr {

namespace {

constexpr double kLayerNormEps = 1e-5;

Eigen::MatrixXd layer_norm(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = x.row(r).mean();
    double var = (x.row(r).array() - mean).square().mean();
    out.row(r) = (x.row(r).array() - mean) / std::sqrt(var + kLayerNormEps);
  }
  return out;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Eigen::ArrayXd e = (x.row(r).array() - x.row(r).maxCoeff()).exp();
    out.row(r) = e / e.sum();
  }
  return out;
}

// q from queries, k/v from memory; h heads over d/h slices
Eigen::MatrixXd attention(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& memory,
                          const AttentionWeights& w, int heads) {
  const int d = static_cast<int>(queries.cols());
  const int dh = d / heads;
  Eigen::MatrixXd q = (queries * w.wq.transpose()).rowwise() + w.bq.transpose();
  Eigen::MatrixXd k = (memory * w.wk.transpose()).rowwise() + w.bk.transpose();
  Eigen::MatrixXd v = (memory * w.wv.transpose()).rowwise() + w.bv.transpose();
  Eigen::MatrixXd concat(queries.rows(), d);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int hidx = 0; hidx < heads; ++hidx) {
    auto qh = q.middleCols(hidx * dh, dh);
    auto kh = k.middleCols(hidx * dh, dh);
    auto vh = v.middleCols(hidx * dh, dh);
    Eigen::MatrixXd attn = softmax_rows(qh * kh.transpose() * scale);
    concat.middleCols(hidx * dh, dh) = attn * vh;
  }
  return (concat * w.wo.transpose()).rowwise() + w.bo.transpose();
}

Eigen::MatrixXd feed_forward(const Eigen::MatrixXd& x, const FeedForward& f) {
  Eigen::MatrixXd h = ((x * f.w1.transpose()).rowwise() + f.b1.transpose()).cwiseMax(0.0);
  return (h * f.w2.transpose()).rowwise() + f.b2.transpose();
}

Eigen::MatrixXd mlp_apply(const Eigen::MatrixXd& x, const Mlp& m) {
  Eigen::MatrixXd h = ((x * m.w1.transpose()).rowwise() + m.b1.transpose()).cwiseMax(0.0);
  return (h * m.w2.transpose()).rowwise() + m.b2.transpose();
}

class WeightDrawer {
 public:
  explicit WeightDrawer(std::uint64_t seed) : rng_(Rng::derive(seed, "egrtr-init")) {}

  Eigen::MatrixXd matrix(int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) m(r, c) = rng_.uniform(-bound, bound);
    }
    return m;
  }

 private:
  Rng rng_;
};

void check_trace(const DecoderTrace& trace, const RelationHeadState& state) {
  const auto& d = state.dims;
  if (static_cast<int>(trace.z.size()) != d.num_z_layers + 1) {
    throw InvariantError("egrtr: trace must carry L+1 decoder representations");
  }
  if (trace.f_enc.cols() != d.d_model) {
    throw InvariantError("egrtr: encoder feature width != d_model");
  }
  for (const auto& z : trace.z) {
    if (z.rows() != d.n || z.cols() != d.d_model) {
      throw InvariantError("egrtr: decoder representation shape mismatch");
    }
  }
}

}  // namespace

RelationHeadState init_state(int n, int d_model, int num_z_layers, int n_rel_layers,
                             int heads, int hidden, int n_rel_classes, std::uint64_t seed) {
  if (n < num_z_layers + 1) {
    throw InvariantError("egrtr: expert selection needs N >= L+1 queries");
  }
  if (heads < 1 || d_model % heads != 0) {
    throw InvariantError("egrtr: d_model must be divisible by head count");
  }
  if (num_z_layers < 1 || n_rel_layers < 1 || hidden < 1 || n_rel_classes < 1) {
    throw InvariantError("egrtr: all dimensions must be >= 1");
  }

  RelationHeadState s;
  s.dims = {n, d_model, num_z_layers, n_rel_layers, heads, hidden, n_rel_classes};
  s.seed = seed;
  WeightDrawer draw(seed);

  auto linear = [&](int out, int in) {
    return LinearLayer{draw.matrix(out, in, in), Eigen::VectorXd::Zero(out)};
  };
  s.proj_q = linear(d_model, d_model);
  s.proj_k = linear(d_model, d_model);
  s.proj_sub = linear(d_model, d_model);
  s.proj_obj = linear(d_model, d_model);
  s.proj_enc = linear(d_model, d_model);
  s.proj_dec = linear(d_model, d_model);
  s.pe_dec = draw.matrix(n, d_model, d_model);
  s.rel_queries = draw.matrix(n, d_model, d_model);

  for (int l = 0; l < n_rel_layers; ++l) {
    RelDecoderLayer layer;
    auto attn = [&]() {
      AttentionWeights w;
      w.wq = draw.matrix(d_model, d_model, d_model);
      w.wk = draw.matrix(d_model, d_model, d_model);
      w.wv = draw.matrix(d_model, d_model, d_model);
      w.wo = draw.matrix(d_model, d_model, d_model);
      w.bq = Eigen::VectorXd::Zero(d_model);
      w.bk = Eigen::VectorXd::Zero(d_model);
      w.bv = Eigen::VectorXd::Zero(d_model);
      w.bo = Eigen::VectorXd::Zero(d_model);
      return w;
    };
    layer.self_attn = attn();
    layer.cross_attn = attn();
    layer.ffn.w1 = draw.matrix(hidden, d_model, d_model);
    layer.ffn.b1 = Eigen::VectorXd::Zero(hidden);
    layer.ffn.w2 = draw.matrix(d_model, hidden, hidden);
    layer.ffn.b2 = Eigen::VectorXd::Zero(d_model);
    s.layers.push_back(std::move(layer));
  }

  auto mlp = [&](int out) {
    Mlp m;
    m.w1 = draw.matrix(hidden, 3 * d_model, 3 * d_model);
    m.b1 = Eigen::VectorXd::Zero(hidden);
    m.w2 = draw.matrix(out, hidden, hidden);
    m.b2 = Eigen::VectorXd::Zero(out);
    return m;
  };
  s.mlp_gate = mlp(1);
  s.mlp_rel = mlp(n_rel_classes);
  s.mlp_conn = mlp(1);
  return s;
}

Eigen::MatrixXd sinusoidal_pe(int count, int d_model) {
  if (d_model % 2 != 0) throw InvariantError("sinusoidal_pe: d_model must be even");
  Eigen::MatrixXd pe(count, d_model);
  for (int pos = 0; pos < count; ++pos) {
    for (int i = 0; i < d_model / 2; ++i) {
      double freq = std::pow(10000.0, -2.0 * i / d_model);
      pe(pos, 2 * i) = std::sin(pos * freq);
      pe(pos, 2 * i + 1) = std::cos(pos * freq);
    }
  }
  return pe;
}

LocalRelations build_local_relations(const DecoderTrace& trace, const RelationHeadState& state) {
  check_trace(trace, state);
  const int n = state.dims.n;
  const int d = state.dims.d_model;
  const int L = state.dims.num_z_layers;

  LocalRelations out;
  for (int l = 0; l < L; ++l) {
    Eigen::MatrixXd qp = state.proj_q.apply(trace.z[l]);
    Eigen::MatrixXd kp = state.proj_k.apply(trace.z[l]);
    Eigen::MatrixXd r(n * n, 2 * d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        r.row(i * n + j) << qp.row(i), kp.row(j);
      }
    }
    out.r_a.push_back(std::move(r));
  }
  Eigen::MatrixXd sub = state.proj_sub.apply(trace.z[L]);
  Eigen::MatrixXd obj = state.proj_obj.apply(trace.z[L]);
  out.r_z.resize(n * n, 2 * d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      out.r_z.row(i * n + j) << sub.row(i), obj.row(j);
    }
  }
  return out;
}

Eigen::MatrixXd rel_transformer_all(const DecoderTrace& trace, const RelationHeadState& state,
                                    bool with_positional_encodings) {
  check_trace(trace, state);
  const auto& dims = state.dims;

  Eigen::MatrixXd f_in = trace.f_enc;
  Eigen::MatrixXd z_in = trace.z[dims.num_z_layers];
  if (with_positional_encodings) {
    f_in += sinusoidal_pe(static_cast<int>(f_in.rows()), dims.d_model);
    z_in += state.pe_dec;
  }
  Eigen::MatrixXd f_star = state.proj_enc.apply(f_in);
  Eigen::MatrixXd z_star = state.proj_dec.apply(z_in);
  Eigen::MatrixXd combined(f_star.rows() + z_star.rows(), dims.d_model);
  combined << f_star, z_star;

  // pre-LN decoder: residual around self-attention, cross-attention, FFN;
  // final layer norm on the stack output
  Eigen::MatrixXd x = state.rel_queries;
  for (const auto& layer : state.layers) {
    Eigen::MatrixXd nx = layer_norm(x);
    x += attention(nx, nx, layer.self_attn, dims.heads);
    x += attention(layer_norm(x), combined, layer.cross_attn, dims.heads);
    x += feed_forward(layer_norm(x), layer.ffn);
  }
  return layer_norm(x);
}

Eigen::MatrixXd rel_transformer_forward(const DecoderTrace& trace,
                                        const RelationHeadState& state,
                                        bool with_positional_encodings) {
  return rel_transformer_all(trace, state, with_positional_encodings)
      .topRows(state.dims.num_z_layers + 1);
}

GatedFusion gated_fusion(const LocalRelations& local, const Eigen::MatrixXd& experts,
                         const RelationHeadState& state) {
  const int n = state.dims.n;
  const int d = state.dims.d_model;
  const int L = state.dims.num_z_layers;
  if (static_cast<int>(local.r_a.size()) != L || experts.rows() < L + 1 ||
      experts.cols() != d) {
    throw InvariantError("gated_fusion: shape mismatch");
  }

  GatedFusion out;
  out.gates.resize(L + 1, n * n);
  out.fused = Eigen::MatrixXd::Zero(n * n, 3 * d);
  for (int l = 0; l <= L; ++l) {
    const Eigen::MatrixXd& pair_part = (l < L) ? local.r_a[l] : local.r_z;
    Eigen::MatrixXd rt(n * n, 3 * d);
    rt.leftCols(2 * d) = pair_part;
    rt.rightCols(d) = experts.row(l).replicate(n * n, 1);
    Eigen::MatrixXd z = mlp_apply(rt, state.mlp_gate);  // N^2 x 1
    for (int p = 0; p < n * n; ++p) {
      double g = 1.0 / (1.0 + std::exp(-z(p, 0)));
      out.gates(l, p) = g;
      out.fused.row(p) += g * rt.row(p);
    }
    out.r_tilde.push_back(std::move(rt));
  }
  return out;
}

GraphPredictions predict_graphs(const Eigen::MatrixXd& fused, const RelationHeadState& state) {
  const int n = state.dims.n;
  const int yt = state.dims.n_rel_classes;
  if (fused.rows() != n * n || fused.cols() != 3 * state.dims.d_model) {
    throw InvariantError("predict_graphs: fused tensor shape mismatch");
  }
  Eigen::MatrixXd rel = mlp_apply(fused, state.mlp_rel);
  Eigen::MatrixXd conn = mlp_apply(fused, state.mlp_conn);
  GraphPredictions out;
  out.g_rel = Tensor3(n, n, yt);
  out.g_conn.resize(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int p = i * n + j;
      for (int t = 0; t < yt; ++t) {
        out.g_rel.at(i, j, t) = 1.0 / (1.0 + std::exp(-rel(p, t)));
      }
      out.g_conn(i, j) = 1.0 / (1.0 + std::exp(-conn(p, 0)));
    }
  }
  return out;
}

RelationTensors head_forward(const DecoderTrace& trace, const RelationHeadState& state) {
  RelationTensors out;
  out.local = build_local_relations(trace, state);
  out.experts = rel_transformer_forward(trace, state);
  const int n = state.dims.n;
  for (int l = 0; l <= state.dims.num_z_layers; ++l) {
    out.r_prime.push_back(out.experts.row(l).replicate(n * n, 1));
  }
  out.fusion = gated_fusion(out.local, out.experts, state);
  out.graphs = predict_graphs(out.fusion.fused, state);
  return out;
}

// ---------------------------------------------------------------------------
// backward through gating and output MLPs

namespace {

struct MlpCache {
  Eigen::MatrixXd z1;   // rows x hidden, pre-activation
  Eigen::MatrixXd h1;   // relu(z1)
  Eigen::MatrixXd out;  // rows x out
};

MlpCache mlp_forward_cached(const Eigen::MatrixXd& x, const Mlp& m) {
  MlpCache c;
  c.z1 = (x * m.w1.transpose()).rowwise() + m.b1.transpose();
  c.h1 = c.z1.cwiseMax(0.0);
  c.out = (c.h1 * m.w2.transpose()).rowwise() + m.b2.transpose();
  return c;
}

// accumulates parameter grads, returns gradient w.r.t. the MLP input
Eigen::MatrixXd mlp_backward(const Eigen::MatrixXd& x, const MlpCache& c,
                             const Eigen::MatrixXd& d_out, const Mlp& m, Mlp& grad) {
  grad.w2 += d_out.transpose() * c.h1;
  grad.b2 += d_out.colwise().sum().transpose();
  Eigen::MatrixXd dh1 = d_out * m.w2;
  Eigen::MatrixXd dz1 = (c.z1.array() > 0.0).select(dh1, 0.0);
  grad.w1 += dz1.transpose() * x;
  grad.b1 += dz1.colwise().sum().transpose();
  return dz1 * m.w1;
}

Mlp zero_like(const Mlp& m) {
  Mlp z;
  z.w1 = Eigen::MatrixXd::Zero(m.w1.rows(), m.w1.cols());
  z.b1 = Eigen::VectorXd::Zero(m.b1.size());
  z.w2 = Eigen::MatrixXd::Zero(m.w2.rows(), m.w2.cols());
  z.b2 = Eigen::VectorXd::Zero(m.b2.size());
  return z;
}

}  // namespace

HeadGradients head_backward(const std::vector<Eigen::MatrixXd>& r_tilde,
                            const RelationHeadState& state,
                            const Eigen::MatrixXd& upstream_rel,
                            const Eigen::VectorXd& upstream_conn) {
  const int n = state.dims.n;
  const int d = state.dims.d_model;
  const int L = state.dims.num_z_layers;
  const int pairs = n * n;
  if (static_cast<int>(r_tilde.size()) != L + 1) {
    throw InvariantError("head_backward: expected L+1 fused-path inputs");
  }
  for (const auto& rt : r_tilde) {
    if (rt.rows() != pairs || rt.cols() != 3 * d) {
      throw InvariantError("head_backward: fused-path input shape mismatch");
    }
  }
  if (upstream_rel.rows() != pairs || upstream_rel.cols() != state.dims.n_rel_classes ||
      upstream_conn.size() != pairs) {
    throw InvariantError("head_backward: upstream gradient shape mismatch");
  }

  // forward recomputation
  std::vector<MlpCache> gate_caches;
  Eigen::MatrixXd gates(L + 1, pairs);
  Eigen::MatrixXd fused = Eigen::MatrixXd::Zero(pairs, 3 * d);
  for (int l = 0; l <= L; ++l) {
    gate_caches.push_back(mlp_forward_cached(r_tilde[l], state.mlp_gate));
    for (int p = 0; p < pairs; ++p) {
      double g = 1.0 / (1.0 + std::exp(-gate_caches[l].out(p, 0)));
      gates(l, p) = g;
      fused.row(p) += g * r_tilde[l].row(p);
    }
  }
  MlpCache rel_cache = mlp_forward_cached(fused, state.mlp_rel);
  MlpCache conn_cache = mlp_forward_cached(fused, state.mlp_conn);

  HeadGradients g;
  g.mlp_gate = zero_like(state.mlp_gate);
  g.mlp_rel = zero_like(state.mlp_rel);
  g.mlp_conn = zero_like(state.mlp_conn);

  // output sigmoids
  Eigen::ArrayXXd rel_sig = 1.0 / (1.0 + (-rel_cache.out.array()).exp());
  Eigen::MatrixXd d_zrel = (upstream_rel.array() * rel_sig * (1.0 - rel_sig)).matrix();
  Eigen::MatrixXd d_zconn(pairs, 1);
  for (int p = 0; p < pairs; ++p) {
    double c = 1.0 / (1.0 + std::exp(-conn_cache.out(p, 0)));
    d_zconn(p, 0) = upstream_conn(p) * c * (1.0 - c);
  }

  Eigen::MatrixXd d_fused = mlp_backward(fused, rel_cache, d_zrel, state.mlp_rel, g.mlp_rel);
  d_fused += mlp_backward(fused, conn_cache, d_zconn, state.mlp_conn, g.mlp_conn);

  g.d_experts = Eigen::MatrixXd::Zero(n, d);
  for (int l = 0; l <= L; ++l) {
    Eigen::MatrixXd d_rt(pairs, 3 * d);
    Eigen::MatrixXd d_zgate(pairs, 1);
    for (int p = 0; p < pairs; ++p) {
      double dg = d_fused.row(p).dot(r_tilde[l].row(p));
      double gv = gates(l, p);
      d_zgate(p, 0) = dg * gv * (1.0 - gv);
      d_rt.row(p) = gates(l, p) * d_fused.row(p);
    }
    d_rt += mlp_backward(r_tilde[l], gate_caches[l], d_zgate, state.mlp_gate, g.mlp_gate);
    // broadcast adjoint: expert l collects the expert slice over all pairs
    g.d_experts.row(l) += d_rt.rightCols(d).colwise().sum();
    g.d_r_tilde.push_back(std::move(d_rt));
  }
  return g;
}

double head_loss(const std::vector<Eigen::MatrixXd>& r_tilde, const RelationHeadState& state) {
  const int L = state.dims.num_z_layers;
  const int pairs = state.dims.n * state.dims.n;
  Eigen::MatrixXd fused = Eigen::MatrixXd::Zero(pairs, 3 * state.dims.d_model);
  for (int l = 0; l <= L; ++l) {
    Eigen::MatrixXd z = mlp_apply(r_tilde[l], state.mlp_gate);
    for (int p = 0; p < pairs; ++p) {
      fused.row(p) += (1.0 / (1.0 + std::exp(-z(p, 0)))) * r_tilde[l].row(p);
    }
  }
  Eigen::MatrixXd rel = mlp_apply(fused, state.mlp_rel);
  Eigen::MatrixXd conn = mlp_apply(fused, state.mlp_conn);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < rel.rows(); ++i) {
    for (Eigen::Index j = 0; j < rel.cols(); ++j) loss += 1.0 / (1.0 + std::exp(-rel(i, j)));
  }
  for (Eigen::Index i = 0; i < conn.rows(); ++i) loss += 1.0 / (1.0 + std::exp(-conn(i, 0)));
  return loss;
}

double gradient_check(const RelationHeadState& state,
                      const std::vector<Eigen::MatrixXd>& r_tilde, double step) {
  const int pairs = state.dims.n * state.dims.n;
  Eigen::MatrixXd up_rel = Eigen::MatrixXd::Ones(pairs, state.dims.n_rel_classes);
  Eigen::VectorXd up_conn = Eigen::VectorXd::Ones(pairs);
  HeadGradients analytic = head_backward(r_tilde, state, up_rel, up_conn);

  double max_rel_err = 0.0;
  auto check_block = [&](auto accessor, Eigen::Index count) {
    RelationHeadState probe = state;
    for (Eigen::Index i = 0; i < count; ++i) {
      auto [value_ptr, grad] = accessor(probe, i);
      const double saved = *value_ptr;
      *value_ptr = saved + step;
      double up = head_loss(r_tilde, probe);
      *value_ptr = saved - step;
      double down = head_loss(r_tilde, probe);
      *value_ptr = saved;
      double fd = (up - down) / (2.0 * step);
      double denom = std::max({std::abs(fd), std::abs(grad), 1e-6});
      max_rel_err = std::max(max_rel_err, std::abs(fd - grad) / denom);
    }
  };

  auto mlp_of = [](RelationHeadState& s, int which) -> Mlp& {
    return which == 0 ? s.mlp_gate : which == 1 ? s.mlp_rel : s.mlp_conn;
  };
  for (int which = 0; which < 3; ++which) {
    const Mlp& g = which == 0 ? analytic.mlp_gate : which == 1 ? analytic.mlp_rel
                                                               : analytic.mlp_conn;
    check_block(
        [&, which](RelationHeadState& s, Eigen::Index i) {
          return std::pair{mlp_of(s, which).w1.data() + i, g.w1.data()[i]};
        },
        g.w1.size());
    check_block(
        [&, which](RelationHeadState& s, Eigen::Index i) {
          return std::pair{mlp_of(s, which).b1.data() + i, g.b1.data()[i]};
        },
        g.b1.size());
    check_block(
        [&, which](RelationHeadState& s, Eigen::Index i) {
          return std::pair{mlp_of(s, which).w2.data() + i, g.w2.data()[i]};
        },
        g.w2.size());
    check_block(
        [&, which](RelationHeadState& s, Eigen::Index i) {
          return std::pair{mlp_of(s, which).b2.data() + i, g.b2.data()[i]};
        },
        g.b2.size());
  }
  return max_rel_err;
}

DecoderTrace random_trace(int n, int enc_token_count, int d_model, int num_z_layers,
                          std::uint64_t seed) {
  Rng rng(Rng::derive(seed, "egrtr-trace"));
  auto mat = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-1.0, 1.0);
    }
    return m;
  };
  DecoderTrace t;
  t.f_enc = mat(enc_token_count, d_model);
  for (int l = 0; l <= num_z_layers; ++l) t.z.push_back(mat(n, d_model));
  return t;
}

// ---------------------------------------------------------------------------
// weights document

namespace {

using ojson = nlohmann::ordered_json;

ojson mat_to_json(const Eigen::MatrixXd& m) {
  ojson j;
  j["shape"] = ojson::array({m.rows(), m.cols()});
  ojson data = ojson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = std::move(data);
  return j;
}

ojson vec_to_json(const Eigen::VectorXd& v) {
  ojson j;
  j["shape"] = ojson::array({v.size()});
  ojson data = ojson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) data.push_back(v(i));
  j["data"] = std::move(data);
  return j;
}

Eigen::MatrixXd mat_from_json(const ojson& j, const std::string& path) {
  if (!j.contains("shape") || !j.contains("data") || j["shape"].size() != 2) {
    throw ParseError(path, "expected {shape:[r,c], data:[...]}");
  }
  Eigen::Index r = j["shape"][0].get<Eigen::Index>();
  Eigen::Index c = j["shape"][1].get<Eigen::Index>();
  const auto& data = j["data"];
  if (static_cast<Eigen::Index>(data.size()) != r * c) {
    throw ParseError(path, "data length does not match shape");
  }
  Eigen::MatrixXd m(r, c);
  Eigen::Index idx = 0;
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index k = 0; k < c; ++k) m(i, k) = data[idx++].get<double>();
  }
  return m;
}

Eigen::VectorXd vec_from_json(const ojson& j, const std::string& path) {
  if (!j.contains("shape") || !j.contains("data") || j["shape"].size() != 1) {
    throw ParseError(path, "expected {shape:[n], data:[...]}");
  }
  Eigen::Index n = j["shape"][0].get<Eigen::Index>();
  if (static_cast<Eigen::Index>(j["data"].size()) != n) {
    throw ParseError(path, "data length does not match shape");
  }
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j["data"][i].get<double>();
  return v;
}

}  // namespace

std::string serialize_head_state(const RelationHeadState& s) {
  ojson j;
  j["dims"] = {{"n", s.dims.n},
               {"d_model", s.dims.d_model},
               {"num_z_layers", s.dims.num_z_layers},
               {"n_rel_layers", s.dims.n_rel_layers},
               {"heads", s.dims.heads},
               {"hidden", s.dims.hidden},
               {"n_rel_classes", s.dims.n_rel_classes}};
  j["seed"] = s.seed;
  ojson t;
  auto put_linear = [&](const char* name, const LinearLayer& l) {
    t[std::string(name) + ".w"] = mat_to_json(l.w);
    t[std::string(name) + ".b"] = vec_to_json(l.b);
  };
  put_linear("proj_q", s.proj_q);
  put_linear("proj_k", s.proj_k);
  put_linear("proj_sub", s.proj_sub);
  put_linear("proj_obj", s.proj_obj);
  put_linear("proj_enc", s.proj_enc);
  put_linear("proj_dec", s.proj_dec);
  t["pe_dec"] = mat_to_json(s.pe_dec);
  t["rel_queries"] = mat_to_json(s.rel_queries);
  for (std::size_t l = 0; l < s.layers.size(); ++l) {
    std::string p = "layers[" + std::to_string(l) + "].";
    auto put_attn = [&](const std::string& name, const AttentionWeights& w) {
      t[p + name + ".wq"] = mat_to_json(w.wq);
      t[p + name + ".wk"] = mat_to_json(w.wk);
      t[p + name + ".wv"] = mat_to_json(w.wv);
      t[p + name + ".wo"] = mat_to_json(w.wo);
      t[p + name + ".bq"] = vec_to_json(w.bq);
      t[p + name + ".bk"] = vec_to_json(w.bk);
      t[p + name + ".bv"] = vec_to_json(w.bv);
      t[p + name + ".bo"] = vec_to_json(w.bo);
    };
    put_attn("self_attn", s.layers[l].self_attn);
    put_attn("cross_attn", s.layers[l].cross_attn);
    t[p + "ffn.w1"] = mat_to_json(s.layers[l].ffn.w1);
    t[p + "ffn.b1"] = vec_to_json(s.layers[l].ffn.b1);
    t[p + "ffn.w2"] = mat_to_json(s.layers[l].ffn.w2);
    t[p + "ffn.b2"] = vec_to_json(s.layers[l].ffn.b2);
  }
  auto put_mlp = [&](const char* name, const Mlp& m) {
    t[std::string(name) + ".w1"] = mat_to_json(m.w1);
    t[std::string(name) + ".b1"] = vec_to_json(m.b1);
    t[std::string(name) + ".w2"] = mat_to_json(m.w2);
    t[std::string(name) + ".b2"] = vec_to_json(m.b2);
  };
  put_mlp("mlp_gate", s.mlp_gate);
  put_mlp("mlp_rel", s.mlp_rel);
  put_mlp("mlp_conn", s.mlp_conn);
  j["tensors"] = std::move(t);
  return j.dump(2) + "\n";
}

RelationHeadState parse_head_state(const std::string& bytes) {
  ojson j = ojson::parse(bytes, nullptr, false);
  if (j.is_discarded()) throw ParseError("head_state", "not valid JSON");
  if (!j.contains("dims") || !j.contains("tensors")) {
    throw ParseError("head_state", "missing dims or tensors");
  }
  const auto& d = j["dims"];
  RelationHeadState s;
  s.dims.n = d.value("n", 0);
  s.dims.d_model = d.value("d_model", 0);
  s.dims.num_z_layers = d.value("num_z_layers", 0);
  s.dims.n_rel_layers = d.value("n_rel_layers", 0);
  s.dims.heads = d.value("heads", 0);
  s.dims.hidden = d.value("hidden", 0);
  s.dims.n_rel_classes = d.value("n_rel_classes", 0);
  s.seed = j.value("seed", 0ULL);
  const auto& t = j["tensors"];
  auto mat = [&](const std::string& name) {
    if (!t.contains(name)) throw ParseError("head_state.tensors", "missing '" + name + "'");
    return mat_from_json(t[name], "head_state.tensors." + name);
  };
  auto vec = [&](const std::string& name) {
    if (!t.contains(name)) throw ParseError("head_state.tensors", "missing '" + name + "'");
    return vec_from_json(t[name], "head_state.tensors." + name);
  };
  auto get_linear = [&](const std::string& name) {
    return LinearLayer{mat(name + ".w"), vec(name + ".b")};
  };
  s.proj_q = get_linear("proj_q");
  s.proj_k = get_linear("proj_k");
  s.proj_sub = get_linear("proj_sub");
  s.proj_obj = get_linear("proj_obj");
  s.proj_enc = get_linear("proj_enc");
  s.proj_dec = get_linear("proj_dec");
  s.pe_dec = mat("pe_dec");
  s.rel_queries = mat("rel_queries");
  for (int l = 0; l < s.dims.n_rel_layers; ++l) {
    std::string p = "layers[" + std::to_string(l) + "].";
    RelDecoderLayer layer;
    auto get_attn = [&](const std::string& name) {
      AttentionWeights w;
      w.wq = mat(p + name + ".wq");
      w.wk = mat(p + name + ".wk");
      w.wv = mat(p + name + ".wv");
      w.wo = mat(p + name + ".wo");
      w.bq = vec(p + name + ".bq");
      w.bk = vec(p + name + ".bk");
      w.bv = vec(p + name + ".bv");
      w.bo = vec(p + name + ".bo");
      return w;
    };
    layer.self_attn = get_attn("self_attn");
    layer.cross_attn = get_attn("cross_attn");
    layer.ffn.w1 = mat(p + "ffn.w1");
    layer.ffn.b1 = vec(p + "ffn.b1");
    layer.ffn.w2 = mat(p + "ffn.w2");
    layer.ffn.b2 = vec(p + "ffn.b2");
    s.layers.push_back(std::move(layer));
  }
  auto get_mlp = [&](const std::string& name) {
    return Mlp{mat(name + ".w1"), vec(name + ".b1"), mat(name + ".w2"), vec(name + ".b2")};
  };
  s.mlp_gate = get_mlp("mlp_gate");
  s.mlp_rel = get_mlp("mlp_rel");
  s.mlp_conn = get_mlp("mlp_conn");
  return s;
}

}  // namespace egrtr
}  // namespace plantrec
