#include "itd/model.hpp"

#include <cmath>

namespace itd::model {

void ModelConfig::validate() const {
  if (feature_dim <= 0 || d_emb <= 0 || d_gcn <= 0 || n_gcn_layers <= 0 ||
      d_attn <= 0 || n_heads <= 0 || d_lstm <= 0 || n_lstm_layers <= 0 ||
      n_codes <= 0)
    throw ConfigError("model dimensions must be positive");
  if (d_attn % n_heads != 0)
    throw ConfigError("d_attn must be divisible by n_heads");
  if (temperature <= 0.0) throw ConfigError("temperature must be positive");
  if (epsilon <= 0.0 || epsilon >= 0.5)
    throw ConfigError("epsilon must lie in (0, 0.5)");
}

namespace {

MatrixXd alloc(long rows, long cols) { return MatrixXd::Zero(rows, cols); }

void lstm_dir_arrays(
    LstmDir& d, const std::string& prefix,
    const std::function<void(const std::string&, double*, long, long)>& fn) {
  auto mat = [&](const char* name, MatrixXd& m) {
    fn(prefix + name, m.data(), m.rows(), m.cols());
  };
  auto vec = [&](const char* name, VectorXd& v) {
    fn(prefix + name, v.data(), v.size(), 1);
  };
  mat("w_f", d.W_f), mat("u_f", d.U_f), vec("b_f", d.b_f);
  mat("w_i", d.W_i), mat("u_i", d.U_i), vec("b_i", d.b_i);
  mat("w_c", d.W_c), mat("u_c", d.U_c), vec("b_c", d.b_c);
  mat("w_o", d.W_o), mat("u_o", d.U_o), vec("b_o", d.b_o);
}

}  // namespace

void ModelParams::for_each_array(
    const std::function<void(const std::string&, double*, long rows,
                             long cols)>& fn) {
  auto mat = [&](const std::string& name, MatrixXd& m) {
    fn(name, m.data(), m.rows(), m.cols());
  };
  auto vec = [&](const std::string& name, VectorXd& v) {
    fn(name, v.data(), v.size(), 1);
  };
  mat("w_emb", W_emb);
  vec("b_emb", b_emb);
  vec("mask_vector", mask_vector);
  for (std::size_t l = 0; l < W_exp.size(); ++l)
    mat("w_exp" + std::to_string(l), W_exp[l]);
  for (std::size_t l = 0; l < W_imp.size(); ++l)
    mat("w_imp" + std::to_string(l), W_imp[l]);
  mat("w_q", W_Q), vec("b_q", b_Q);
  mat("w_k", W_K), vec("b_k", b_K);
  mat("w_v", W_V), vec("b_v", b_V);
  mat("w_heads", W_O);
  mat("w_out_attn", W_out_attn);
  vec("b_out_attn", b_out_attn);
  for (std::size_t l = 0; l < lstm.size(); ++l) {
    lstm_dir_arrays(lstm[l].fw, "lstm" + std::to_string(l) + "_fw_", fn);
    lstm_dir_arrays(lstm[l].bw, "lstm" + std::to_string(l) + "_bw_", fn);
  }
  mat("w_head", W_head);
  vec("b_head", b_head);
}

long ModelParams::n_parameters() {
  long total = 0;
  for_each_array([&](const std::string&, double*, long rows, long cols) {
    total += rows * cols;
  });
  return total;
}

ModelParams ModelParams::init(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams p;
  p.cfg = cfg;
  p.W_emb = alloc(cfg.feature_dim, cfg.d_emb);
  p.b_emb = VectorXd::Zero(cfg.d_emb);
  p.mask_vector = VectorXd::Zero(cfg.feature_dim);
  for (int l = 0; l < cfg.n_gcn_layers; ++l) {
    long in = l == 0 ? cfg.d_emb : cfg.d_gcn;
    p.W_exp.push_back(alloc(in, cfg.d_gcn));
    p.W_imp.push_back(alloc(in, cfg.d_gcn));
  }
  long d_c = 2L * cfg.d_gcn;
  p.W_Q = alloc(d_c, cfg.d_attn);
  p.W_K = alloc(d_c, cfg.d_attn);
  p.W_V = alloc(d_c, cfg.d_attn);
  p.b_Q = VectorXd::Zero(cfg.d_attn);
  p.b_K = VectorXd::Zero(cfg.d_attn);
  p.b_V = VectorXd::Zero(cfg.d_attn);
  p.W_O = alloc(cfg.d_attn, cfg.d_attn);
  p.W_out_attn = alloc(cfg.d_attn, cfg.d_attn);
  p.b_out_attn = VectorXd::Zero(cfg.d_attn);
  for (int l = 0; l < cfg.n_lstm_layers; ++l) {
    long in = l == 0 ? cfg.d_attn : 2L * cfg.d_lstm;
    LstmLayer layer;
    for (LstmDir* dir : {&layer.fw, &layer.bw}) {
      dir->W_f = alloc(in, cfg.d_lstm);
      dir->U_f = alloc(cfg.d_lstm, cfg.d_lstm);
      dir->b_f = VectorXd::Zero(cfg.d_lstm);
      dir->W_i = alloc(in, cfg.d_lstm);
      dir->U_i = alloc(cfg.d_lstm, cfg.d_lstm);
      dir->b_i = VectorXd::Zero(cfg.d_lstm);
      dir->W_c = alloc(in, cfg.d_lstm);
      dir->U_c = alloc(cfg.d_lstm, cfg.d_lstm);
      dir->b_c = VectorXd::Zero(cfg.d_lstm);
      dir->W_o = alloc(in, cfg.d_lstm);
      dir->U_o = alloc(cfg.d_lstm, cfg.d_lstm);
      dir->b_o = VectorXd::Zero(cfg.d_lstm);
    }
    p.lstm.push_back(std::move(layer));
  }
  p.W_head = alloc(2L * cfg.d_lstm, cfg.n_codes);
  p.b_head = VectorXd::Zero(cfg.n_codes);

  Rng rng(seed);
  p.for_each_array([&](const std::string& name, double* data, long rows,
                       long cols) {
    bool is_bias = name[0] == 'b' || name.find("_b_") != std::string::npos;
    if (is_bias) return;  // biases start at zero
    double bound = std::sqrt(1.0 / static_cast<double>(rows));
    for (long k = 0; k < rows * cols; ++k)
      data[k] = rng.uniform_in(-bound, bound);
  });
  return p;
}

ModelParams ModelParams::zeros_like(const ModelParams& other) {
  ModelParams p = other;
  p.for_each_array([](const std::string&, double* data, long rows, long cols) {
    std::fill(data, data + rows * cols, 0.0);
  });
  return p;
}

SequenceInput to_input(const prep::MaskedSequence& seq) {
  SequenceInput input;
  const auto& acts = seq.sub->activities;
  if (acts.empty()) throw DataError("empty sub-session");
  long n = static_cast<long>(acts.size());
  long dim = static_cast<long>(acts[0].features.size());
  input.features = MatrixXd(n, dim);
  for (long i = 0; i < n; ++i)
    for (long d = 0; d < dim; ++d)
      input.features(i, d) = acts[static_cast<std::size_t>(i)]
                                 .features[static_cast<std::size_t>(d)];
  input.graph = graph::build_explicit(seq);
  input.mask_pos = seq.mask_pos;
  input.true_code = seq.true_code;
  input.abnormal = seq.abnormal;
  input.noise_tag =
      fnv1a64(seq.sub->session_id + ":" + std::to_string(seq.mask_pos));
  return input;
}

MatrixXd embed(const MatrixXd& features, const std::vector<int>& mask_positions,
               const ModelParams& params) {
  if (!features.allFinite()) throw DataError("non-finite features");
  MatrixXd X = features;
  for (int m : mask_positions) {
    if (m < 0 || m >= X.rows()) throw ConfigError("mask position out of range");
    X.row(m) = params.mask_vector.transpose();
  }
  MatrixXd E = X * params.W_emb;
  E.rowwise() += params.b_emb.transpose();
  return E;
}

namespace {

MatrixXd row_normalize(const MatrixXd& E, VectorXd* norms) {
  VectorXd r = E.rowwise().norm().cwiseMax(1e-30);
  if (norms) *norms = r;
  return r.cwiseInverse().asDiagonal() * E;
}

}  // namespace

MatrixXd similarity(const MatrixXd& E, double epsilon) {
  MatrixXd Ebar = row_normalize(E, nullptr);
  MatrixXd theta = (((Ebar * Ebar.transpose()).array() + 1.0) / 2.0)
                       .cwiseMax(epsilon)
                       .cwiseMin(1.0 - epsilon)
                       .matrix();
  return theta;
}

MatrixXd gumbel_adjacency(const MatrixXd& theta, double s, Rng* rng,
                          bool hard, MatrixXd* soft_out) {
  if (s <= 0.0) throw ConfigError("temperature must be positive");
  long n = theta.rows();
  MatrixXd soft = MatrixXd::Zero(n, n);
  for (long i = 0; i < n; ++i) {
    soft(i, i) = 1.0;
    for (long j = i + 1; j < n; ++j) {
      double t = theta(i, j);
      if (!(t > 0.0 && t < 1.0))
        throw ConfigError("similarity outside (0,1)");
      double noise = 0.0;
      if (rng) {
        double g1 = -std::log(-std::log(rng->uniform_open()));
        double g2 = -std::log(-std::log(rng->uniform_open()));
        noise = g1 - g2;
      }
      double z = (std::log(t / (1.0 - t)) + noise) / s;
      double a = 1.0 / (1.0 + std::exp(-z));
      soft(i, j) = soft(j, i) = a;
    }
  }
  if (soft_out) *soft_out = soft;
  if (!hard) return soft;
  MatrixXd out = (soft.array() > 0.5).cast<double>().matrix();
  for (long i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

MatrixXd normalized_adjacency(const MatrixXd& A) {
  MatrixXd B = A + MatrixXd::Identity(A.rows(), A.cols());
  VectorXd p = B.rowwise().sum().array().rsqrt().matrix();
  return p.asDiagonal() * B * p.asDiagonal();
}

MatrixXd gcn_layer(const MatrixXd& H, const MatrixXd& A, const MatrixXd& W) {
  return (normalized_adjacency(A) * H * W).cwiseMax(0.0);
}

namespace {

void softmax_rows_inplace(MatrixXd& S) {
  for (long i = 0; i < S.rows(); ++i) {
    double mx = S.row(i).maxCoeff();
    S.row(i) = (S.row(i).array() - mx).exp();
    S.row(i) /= S.row(i).sum();
  }
}

VectorXd softmax_vec(const VectorXd& z) {
  VectorXd y = (z.array() - z.maxCoeff()).exp().matrix();
  return y / y.sum();
}

struct AttentionOut {
  MatrixXd C, Q, K, V, heads, Attn, O;
  std::vector<MatrixXd> P;
};

AttentionOut attention_forward(const MatrixXd& Hexp, const MatrixXd& Himp,
                               const ModelParams& params) {
  const ModelConfig& cfg = params.cfg;
  AttentionOut a;
  long n = Hexp.rows();
  a.C = MatrixXd(n, Hexp.cols() + Himp.cols());
  a.C << Hexp, Himp;
  a.Q = a.C * params.W_Q;
  a.Q.rowwise() += params.b_Q.transpose();
  a.K = a.C * params.W_K;
  a.K.rowwise() += params.b_K.transpose();
  a.V = a.C * params.W_V;
  a.V.rowwise() += params.b_V.transpose();
  long dh = cfg.d_head();
  double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  a.heads = MatrixXd(n, cfg.d_attn);
  a.P.resize(static_cast<std::size_t>(cfg.n_heads));
  for (int h = 0; h < cfg.n_heads; ++h) {
    auto Qh = a.Q.middleCols(h * dh, dh);
    auto Kh = a.K.middleCols(h * dh, dh);
    auto Vh = a.V.middleCols(h * dh, dh);
    MatrixXd S = Qh * Kh.transpose() * scale;
    softmax_rows_inplace(S);
    a.P[static_cast<std::size_t>(h)] = S;
    a.heads.middleCols(h * dh, dh) = S * Vh;
  }
  a.Attn = a.heads * params.W_O;
  a.O = a.Attn * params.W_out_attn;
  a.O.rowwise() += params.b_out_attn.transpose();
  return a;
}

VectorXd vsigmoid(const VectorXd& a) {
  return (1.0 / (1.0 + (-a.array()).exp())).matrix();
}

LstmDirTrace lstm_dir_forward(const MatrixXd& X, const LstmDir& d,
                              bool reverse) {
  long T = X.rows();
  long dl = d.U_f.rows();
  LstmDirTrace tr;
  tr.x = X;
  for (MatrixXd* m : {&tr.f, &tr.i, &tr.g, &tr.o, &tr.c, &tr.tanh_c, &tr.h})
    *m = MatrixXd::Zero(T, dl);
  VectorXd h_prev = VectorXd::Zero(dl), c_prev = VectorXd::Zero(dl);
  for (long step = 0; step < T; ++step) {
    long t = reverse ? T - 1 - step : step;
    VectorXd x_t = X.row(t).transpose();
    VectorXd f = vsigmoid(d.W_f.transpose() * x_t + d.U_f.transpose() * h_prev +
                          d.b_f);
    VectorXd i = vsigmoid(d.W_i.transpose() * x_t + d.U_i.transpose() * h_prev +
                          d.b_i);
    VectorXd o = vsigmoid(d.W_o.transpose() * x_t + d.U_o.transpose() * h_prev +
                          d.b_o);
    VectorXd g = (d.W_c.transpose() * x_t + d.U_c.transpose() * h_prev +
                  d.b_c).array().tanh().matrix();
    VectorXd c = f.cwiseProduct(c_prev) + i.cwiseProduct(g);
    VectorXd tc = c.array().tanh();
    VectorXd h = o.cwiseProduct(tc);
    tr.f.row(t) = f.transpose();
    tr.i.row(t) = i.transpose();
    tr.g.row(t) = g.transpose();
    tr.o.row(t) = o.transpose();
    tr.c.row(t) = c.transpose();
    tr.tanh_c.row(t) = tc.transpose();
    tr.h.row(t) = h.transpose();
    h_prev = h;
    c_prev = c;
  }
  return tr;
}

std::vector<LstmLayerTrace> lstm_stack_forward(const MatrixXd& O,
                                               const ModelParams& params) {
  std::vector<LstmLayerTrace> out;
  const MatrixXd* input = &O;
  for (const auto& layer : params.lstm) {
    LstmLayerTrace tr;
    tr.fw = lstm_dir_forward(*input, layer.fw, false);
    tr.bw = lstm_dir_forward(*input, layer.bw, true);
    tr.h_cat = MatrixXd(input->rows(), tr.fw.h.cols() + tr.bw.h.cols());
    tr.h_cat << tr.fw.h, tr.bw.h;
    out.push_back(std::move(tr));
    input = &out.back().h_cat;
  }
  return out;
}

}  // namespace

MatrixXd fuse_attention(const MatrixXd& H_explicit, const MatrixXd& H_implicit,
                        const ModelParams& params) {
  return attention_forward(H_explicit, H_implicit, params).O;
}

VectorXd bilstm_head(const MatrixXd& O, int true_len,
                     const ModelParams& params) {
  if (true_len < 1) throw DataError("zero-length sequence");
  if (true_len > O.rows()) throw DataError("true length exceeds padded rows");
  MatrixXd unpadded = O.topRows(true_len);
  auto traces = lstm_stack_forward(unpadded, params);
  VectorXd h_agg =
      traces.back().h_cat.colwise().mean().transpose();
  return softmax_vec(params.W_head.transpose() * h_agg + params.b_head);
}

VectorXd forward_sequence(const ModelParams& params,
                          const SequenceInput& input, std::uint64_t seed,
                          NoiseMode noise, ForwardTrace* trace) {
  const ModelConfig& cfg = params.cfg;
  long n = input.features.rows();
  if (n < 1) throw DataError("zero-length sequence");
  if (input.features.cols() != cfg.feature_dim)
    throw ConfigError("feature width differs from model config");

  ForwardTrace local;
  ForwardTrace& tr = trace ? *trace : local;

  if (!input.features.allFinite()) throw DataError("non-finite features");
  if (input.mask_pos < 0 || input.mask_pos >= n)
    throw ConfigError("mask position out of range");
  tr.X = input.features;
  tr.X.row(input.mask_pos) = params.mask_vector.transpose();
  tr.E = tr.X * params.W_emb;
  tr.E.rowwise() += params.b_emb.transpose();

  // explicit pathway
  MatrixXd A_exp = MatrixXd::Zero(n, n);
  for (const auto& [i, j] : input.graph.edges) A_exp(i, j) = 1.0;
  tr.Ahat_exp = normalized_adjacency(A_exp);
  tr.H_exp = {tr.E};
  tr.Z_exp.clear();
  for (const auto& W : params.W_exp) {
    MatrixXd Z = tr.Ahat_exp * tr.H_exp.back() * W;
    tr.Z_exp.push_back(Z);
    tr.H_exp.push_back(Z.cwiseMax(0.0));
  }

  // implicit pathway
  tr.Ebar = row_normalize(tr.E, &tr.row_norm);
  tr.theta_raw = tr.Ebar * tr.Ebar.transpose();
  MatrixXd mapped = ((tr.theta_raw.array() + 1.0) / 2.0).matrix();
  tr.theta = mapped.cwiseMax(cfg.epsilon).cwiseMin(1.0 - cfg.epsilon);
  tr.clip_mask = (mapped.array() > cfg.epsilon &&
                  mapped.array() < 1.0 - cfg.epsilon)
                     .cast<double>()
                     .matrix();
  Rng rng(mix64(seed, input.noise_tag));
  Rng* noise_src = noise == NoiseMode::kGumbel ? &rng : nullptr;
  tr.A_impl = gumbel_adjacency(tr.theta, cfg.temperature, noise_src,
                               cfg.hard_adjacency, &tr.A_soft);
  MatrixXd A_imp_offdiag = tr.A_impl;
  A_imp_offdiag.diagonal().setZero();
  tr.Ahat_impl = normalized_adjacency(A_imp_offdiag);
  tr.H_imp = {tr.E};
  tr.Z_imp.clear();
  for (const auto& W : params.W_imp) {
    MatrixXd Z = tr.Ahat_impl * tr.H_imp.back() * W;
    tr.Z_imp.push_back(Z);
    tr.H_imp.push_back(Z.cwiseMax(0.0));
  }

  AttentionOut att =
      attention_forward(tr.H_exp.back(), tr.H_imp.back(), params);
  tr.C = std::move(att.C);
  tr.Q = std::move(att.Q);
  tr.K = std::move(att.K);
  tr.V = std::move(att.V);
  tr.P = std::move(att.P);
  tr.heads = std::move(att.heads);
  tr.Attn = std::move(att.Attn);
  tr.O = std::move(att.O);

  tr.lstm = lstm_stack_forward(tr.O, params);
  tr.h_agg = tr.lstm.back().h_cat.colwise().mean().transpose();
  tr.logits = params.W_head.transpose() * tr.h_agg + params.b_head;
  tr.y = softmax_vec(tr.logits);
  return tr.y;
}

std::vector<VectorXd> forward_batch(const ModelParams& params,
                                    const std::vector<SequenceInput>& batch,
                                    std::uint64_t seed, NoiseMode noise) {
  std::vector<VectorXd> out;
  out.reserve(batch.size());
  for (const auto& input : batch)
    out.push_back(forward_sequence(params, input, seed, noise));
  return out;
}

namespace {

// Backprop through Ahat = D^{-1/2}(A+I)D^{-1/2}; returns dA (diagonal
// contributions are discarded by the caller when A's diagonal is fixed).
MatrixXd normalized_adjacency_backward(const MatrixXd& A, const MatrixXd& dAhat) {
  long n = A.rows();
  MatrixXd B = A + MatrixXd::Identity(n, n);
  VectorXd deg = B.rowwise().sum();
  VectorXd p = deg.array().rsqrt();
  MatrixXd dB = dAhat.cwiseProduct(p * p.transpose());
  VectorXd dp = VectorXd::Zero(n);
  for (long i = 0; i < n; ++i) {
    double acc = 0.0;
    for (long j = 0; j < n; ++j) {
      acc += dAhat(i, j) * B(i, j) * p(j);
      acc += dAhat(j, i) * B(j, i) * p(j);
    }
    dp(i) = acc;
  }
  VectorXd dd = (dp.array() * (-0.5) * deg.array().pow(-1.5)).matrix();
  dB.colwise() += dd;
  return dB;
}

struct GcnBack {
  MatrixXd dH0;     // gradient at the stack input
  MatrixXd dAhat;   // gradient at the normalized adjacency
};

GcnBack gcn_stack_backward(const std::vector<MatrixXd>& H,
                           const std::vector<MatrixXd>& Z,
                           const MatrixXd& Ahat,
                           const std::vector<MatrixXd>& W,
                           std::vector<MatrixXd>& dW, const MatrixXd& dOut) {
  GcnBack back;
  back.dAhat = MatrixXd::Zero(Ahat.rows(), Ahat.cols());
  MatrixXd dH = dOut;
  for (long l = static_cast<long>(W.size()) - 1; l >= 0; --l) {
    std::size_t ul = static_cast<std::size_t>(l);
    MatrixXd dZ = dH.cwiseProduct(
        (Z[ul].array() > 0.0).cast<double>().matrix());
    MatrixXd M = H[ul] * W[ul];          // pre-aggregation features
    back.dAhat += dZ * M.transpose();
    MatrixXd dM = Ahat.transpose() * dZ;
    dW[ul] += H[ul].transpose() * dM;
    dH = dM * W[ul].transpose();
  }
  back.dH0 = dH;
  return back;
}

void lstm_dir_backward(const LstmDirTrace& tr, const LstmDir& d, bool reverse,
                       const MatrixXd& dh_ext, LstmDir& gd, MatrixXd& dX) {
  long T = tr.x.rows();
  long dl = d.U_f.rows();
  VectorXd dh_next = VectorXd::Zero(dl), dc_next = VectorXd::Zero(dl);
  for (long step = T - 1; step >= 0; --step) {
    long t = reverse ? T - 1 - step : step;
    long t_prev = reverse ? t + 1 : t - 1;
    bool has_prev = step > 0;
    VectorXd h_prev = VectorXd::Zero(dl), c_prev = VectorXd::Zero(dl);
    if (has_prev) {
      h_prev = tr.h.row(t_prev).transpose();
      c_prev = tr.c.row(t_prev).transpose();
    }
    VectorXd f = tr.f.row(t).transpose(), i = tr.i.row(t).transpose(),
             g = tr.g.row(t).transpose(), o = tr.o.row(t).transpose(),
             tc = tr.tanh_c.row(t).transpose();
    VectorXd dh = dh_ext.row(t).transpose() + dh_next;
    VectorXd dc = dc_next +
                  dh.cwiseProduct(o).cwiseProduct(
                      (1.0 - tc.array().square()).matrix());
    VectorXd do_ = dh.cwiseProduct(tc);
    VectorXd df = dc.cwiseProduct(c_prev);
    VectorXd di = dc.cwiseProduct(g);
    VectorXd dg = dc.cwiseProduct(i);
    dc_next = dc.cwiseProduct(f);
    VectorXd da_f = df.cwiseProduct(f).cwiseProduct((1.0 - f.array()).matrix());
    VectorXd da_i = di.cwiseProduct(i).cwiseProduct((1.0 - i.array()).matrix());
    VectorXd da_o =
        do_.cwiseProduct(o).cwiseProduct((1.0 - o.array()).matrix());
    VectorXd da_g = dg.cwiseProduct((1.0 - g.array().square()).matrix());
    VectorXd x_t = tr.x.row(t).transpose();
    gd.W_f += x_t * da_f.transpose();
    gd.W_i += x_t * da_i.transpose();
    gd.W_c += x_t * da_g.transpose();
    gd.W_o += x_t * da_o.transpose();
    gd.U_f += h_prev * da_f.transpose();
    gd.U_i += h_prev * da_i.transpose();
    gd.U_c += h_prev * da_g.transpose();
    gd.U_o += h_prev * da_o.transpose();
    gd.b_f += da_f;
    gd.b_i += da_i;
    gd.b_c += da_g;
    gd.b_o += da_o;
    dX.row(t) += (d.W_f * da_f + d.W_i * da_i + d.W_c * da_g + d.W_o * da_o)
                     .transpose();
    dh_next = d.U_f * da_f + d.U_i * da_i + d.U_c * da_g + d.U_o * da_o;
  }
}

}  // namespace

void backward_sequence(const ModelParams& params, const SequenceInput& input,
                       const ForwardTrace& tr, const VectorXd& dlogits,
                       ModelParams& grads) {
  const ModelConfig& cfg = params.cfg;
  long n = tr.X.rows();

  // head
  grads.W_head += tr.h_agg * dlogits.transpose();
  grads.b_head += dlogits;
  VectorXd dh_agg = params.W_head * dlogits;

  // mean aggregation (per-sequence forward: every row is real)
  MatrixXd dh = MatrixXd::Zero(n, 2L * cfg.d_lstm);
  dh.rowwise() = (dh_agg / static_cast<double>(n)).transpose();

  // LSTM stack, top down
  MatrixXd dO;
  for (long l = static_cast<long>(params.lstm.size()) - 1; l >= 0; --l) {
    std::size_t ul = static_cast<std::size_t>(l);
    const LstmLayerTrace& ltr = tr.lstm[ul];
    long d_in = ltr.fw.x.cols();
    MatrixXd dX = MatrixXd::Zero(n, d_in);
    lstm_dir_backward(ltr.fw, params.lstm[ul].fw, false,
                      dh.leftCols(cfg.d_lstm), grads.lstm[ul].fw, dX);
    lstm_dir_backward(ltr.bw, params.lstm[ul].bw, true,
                      dh.rightCols(cfg.d_lstm), grads.lstm[ul].bw, dX);
    if (l == 0)
      dO = dX;
    else
      dh = dX;
  }

  // attention output layers
  MatrixXd dAttn = dO * params.W_out_attn.transpose();
  grads.W_out_attn += tr.Attn.transpose() * dO;
  grads.b_out_attn += dO.colwise().sum().transpose();
  MatrixXd dheads = dAttn * params.W_O.transpose();
  grads.W_O += tr.heads.transpose() * dAttn;

  long dk = cfg.d_head();
  double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  MatrixXd dQ = MatrixXd::Zero(n, cfg.d_attn);
  MatrixXd dK = MatrixXd::Zero(n, cfg.d_attn);
  MatrixXd dV = MatrixXd::Zero(n, cfg.d_attn);
  for (int h = 0; h < cfg.n_heads; ++h) {
    const MatrixXd& P = tr.P[static_cast<std::size_t>(h)];
    auto Qh = tr.Q.middleCols(h * dk, dk);
    auto Kh = tr.K.middleCols(h * dk, dk);
    auto Vh = tr.V.middleCols(h * dk, dk);
    MatrixXd dhead = dheads.middleCols(h * dk, dk);
    MatrixXd dP = dhead * Vh.transpose();
    dV.middleCols(h * dk, dk) += P.transpose() * dhead;
    VectorXd row_dot = (dP.cwiseProduct(P)).rowwise().sum();
    MatrixXd dS = P.cwiseProduct(dP - row_dot.replicate(1, n));
    dQ.middleCols(h * dk, dk) += dS * Kh * scale;
    dK.middleCols(h * dk, dk) += dS.transpose() * Qh * scale;
  }
  grads.W_Q += tr.C.transpose() * dQ;
  grads.W_K += tr.C.transpose() * dK;
  grads.W_V += tr.C.transpose() * dV;
  grads.b_Q += dQ.colwise().sum().transpose();
  grads.b_K += dK.colwise().sum().transpose();
  grads.b_V += dV.colwise().sum().transpose();
  MatrixXd dC = dQ * params.W_Q.transpose() + dK * params.W_K.transpose() +
                dV * params.W_V.transpose();

  // GCN pathways
  GcnBack back_exp = gcn_stack_backward(tr.H_exp, tr.Z_exp, tr.Ahat_exp,
                                        params.W_exp, grads.W_exp,
                                        dC.leftCols(cfg.d_gcn));
  GcnBack back_imp = gcn_stack_backward(tr.H_imp, tr.Z_imp, tr.Ahat_impl,
                                        params.W_imp, grads.W_imp,
                                        dC.rightCols(cfg.d_gcn));
  MatrixXd dE = back_exp.dH0 + back_imp.dH0;
  // explicit adjacency is data, not parameters: its gradient stops here

  // implicit adjacency -> theta -> Ebar -> E
  MatrixXd A_off = tr.A_impl;
  A_off.diagonal().setZero();
  MatrixXd dA = normalized_adjacency_backward(A_off, back_imp.dAhat);
  MatrixXd dTheta_raw = MatrixXd::Zero(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j) {
      double a = tr.A_soft(i, j);
      double dz = (dA(i, j) + dA(j, i)) * a * (1.0 - a);
      double t = tr.theta(i, j);
      double dtheta = dz / cfg.temperature / (t * (1.0 - t));
      dTheta_raw(i, j) = dtheta * tr.clip_mask(i, j) * 0.5;
    }
  MatrixXd dEbar = (dTheta_raw + dTheta_raw.transpose()) * tr.Ebar;
  for (long i = 0; i < n; ++i) {
    double r = tr.row_norm(i);
    Eigen::RowVectorXd eb = tr.Ebar.row(i);
    Eigen::RowVectorXd de = dEbar.row(i);
    dE.row(i) += (de - eb * de.dot(eb)) / r;
  }

  // embedding
  grads.W_emb += tr.X.transpose() * dE;
  grads.b_emb += dE.colwise().sum().transpose();
  MatrixXd dX = dE * params.W_emb.transpose();
  grads.mask_vector += dX.row(input.mask_pos).transpose();
}

}  // namespace itd::model
