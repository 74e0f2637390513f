#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "itd/graph.hpp"
#include "itd/preprocess.hpp"

namespace itd::model {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct ModelConfig {
  int feature_dim = 54;   // D
  int d_emb = 54;
  int d_gcn = 16;
  int n_gcn_layers = 2;
  int d_attn = 16;
  int n_heads = 8;
  int d_lstm = 32;        // per direction
  int n_lstm_layers = 2;
  int n_codes = 192;
  double temperature = 0.5;
  double epsilon = 1e-8;
  bool hard_adjacency = true;

  int d_head() const { return d_attn / n_heads; }
  void validate() const;
};

struct LstmDir {
  MatrixXd W_f, U_f, W_i, U_i, W_c, U_c, W_o, U_o;
  VectorXd b_f, b_i, b_c, b_o;
};

struct LstmLayer {
  LstmDir fw, bw;
};

struct ModelParams {
  ModelConfig cfg;
  MatrixXd W_emb;          // D x d_emb
  VectorXd b_emb;          // d_emb
  VectorXd mask_vector;    // D, substituted at masked rows pre-embedding
  std::vector<MatrixXd> W_exp, W_imp;  // GCN stacks
  MatrixXd W_Q, W_K, W_V;  // 2*d_gcn x d_attn
  VectorXd b_Q, b_K, b_V;
  MatrixXd W_O;            // d_attn x d_attn, head combine
  MatrixXd W_out_attn;     // d_attn x d_attn
  VectorXd b_out_attn;
  std::vector<LstmLayer> lstm;
  MatrixXd W_head;         // 2*d_lstm x n_codes
  VectorXd b_head;

  static ModelParams init(const ModelConfig& cfg, std::uint64_t seed);
  static ModelParams zeros_like(const ModelParams& other);

  // Stable-ordered traversal of every array; used by the optimizer,
  // serialization, and the finite-difference harness.
  void for_each_array(
      const std::function<void(const std::string&, double*, long rows,
                               long cols)>& fn);
  long n_parameters();
};

enum class NoiseMode { kGumbel, kZero };

// One sequence ready for the network: standardized features in node order
// plus its explicit graph. noise_tag isolates the Gumbel stream per
// sequence so outputs never depend on batch composition.
struct SequenceInput {
  MatrixXd features;  // n x D
  graph::ExplicitGraph graph;
  int mask_pos = 0;
  int true_code = 0;
  bool abnormal = false;
  std::uint64_t noise_tag = 0;
};

SequenceInput to_input(const prep::MaskedSequence& seq);

// ----- individual operations (single graph block) -----

MatrixXd embed(const MatrixXd& features, const std::vector<int>& mask_positions,
               const ModelParams& params);

// Pairwise cosine mapped to (0,1): clip((cos+1)/2, eps, 1-eps).
MatrixXd similarity(const MatrixXd& E, double epsilon);

// a = sigmoid((logit(theta) + g1 - g2)/s), upper triangle sampled and
// mirrored, unit diagonal. rng == nullptr means zero noise. If hard, values
// are thresholded at 0.5 (gradients elsewhere use the soft values).
MatrixXd gumbel_adjacency(const MatrixXd& theta, double s, Rng* rng,
                          bool hard, MatrixXd* soft_out = nullptr);

// Ahat = D^{-1/2} (A + I) D^{-1/2} from an adjacency without self-loops.
MatrixXd normalized_adjacency(const MatrixXd& A);

// H' = relu(Ahat H W); A carries no self-loops.
MatrixXd gcn_layer(const MatrixXd& H, const MatrixXd& A, const MatrixXd& W);

MatrixXd fuse_attention(const MatrixXd& H_explicit, const MatrixXd& H_implicit,
                        const ModelParams& params);

// Mean of bidirectional hidden states over true_len rows, then softmax head.
// Rows of O beyond true_len are padding and never read.
VectorXd bilstm_head(const MatrixXd& O, int true_len,
                     const ModelParams& params);

// ----- full forward/backward -----

struct LstmDirTrace {
  MatrixXd x, f, i, g, o, c, tanh_c, h;  // n x d each
};

struct LstmLayerTrace {
  LstmDirTrace fw, bw;
  MatrixXd h_cat;  // n x 2*d_lstm
};

struct ForwardTrace {
  MatrixXd X;               // features with mask row substituted
  MatrixXd E;
  MatrixXd Ebar;            // row-normalized E
  VectorXd row_norm;
  MatrixXd theta_raw;       // cosine in [-1,1]
  MatrixXd theta;           // clipped (0,1)
  MatrixXd clip_mask;       // 1 where the clip was inactive
  MatrixXd A_soft;          // sigmoid values, unit diagonal
  MatrixXd A_impl;          // emitted (hard or soft), unit diagonal
  MatrixXd Ahat_exp, Ahat_impl;
  std::vector<MatrixXd> H_exp, H_imp;  // layer inputs, size n_layers+1
  std::vector<MatrixXd> Z_exp, Z_imp;  // pre-ReLU per layer
  MatrixXd C;               // n x 2*d_gcn
  MatrixXd Q, K, V;
  std::vector<MatrixXd> P;  // per-head attention weights, n x n
  MatrixXd heads;           // n x d_attn, concatenated head outputs
  MatrixXd Attn;            // heads * W_O
  MatrixXd O;
  std::vector<LstmLayerTrace> lstm;
  VectorXd h_agg;
  VectorXd logits;
  VectorXd y;
};

VectorXd forward_sequence(const ModelParams& params,
                          const SequenceInput& input, std::uint64_t seed,
                          NoiseMode noise, ForwardTrace* trace = nullptr);

// Accumulates parameter gradients for one sequence given d(loss)/d(logits).
void backward_sequence(const ModelParams& params, const SequenceInput& input,
                       const ForwardTrace& trace, const VectorXd& dlogits,
                       ModelParams& grads);

std::vector<VectorXd> forward_batch(const ModelParams& params,
                                    const std::vector<SequenceInput>& batch,
                                    std::uint64_t seed, NoiseMode noise);

}  // namespace itd::model
