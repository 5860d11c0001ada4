#pragma once

// Dense multi-head self-attention plus the sparse variants: sliding-window
// attention (SWA), simplified sparse attention (SSA), panoramic sparse
// attention (PSA) and the hybrid block (PHA) that runs SWA and PSA in
// parallel. All forward passes are pure and schedule-independent.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

#include "panokit/image.hpp"
#include "panokit/matrix.hpp"
#include "panokit/parallel.hpp"

namespace panokit {

struct TokenSequence {
  Matrix hidden;        // [L x d]
  bool has_cls = false; // row 0 is the class token when set

  std::size_t length() const { return hidden.rows(); }
  std::size_t dim() const { return hidden.cols(); }
};

struct AttentionConfig {
  std::size_t d = 64;
  std::size_t num_heads = 4;
  std::size_t window_size = 8;  // L_w
  std::size_t top_k = 512;      // K
  double ln_eps = 1e-5;
  std::size_t num_workers = 1;

  std::size_t head_dim() const {
    if (num_heads == 0 || d % num_heads != 0)
      throw DimensionError("AttentionConfig: d=" + std::to_string(d) +
                           " not divisible by heads=" + std::to_string(num_heads));
    return d / num_heads;
  }
};

struct IndexerConfig {
  std::size_t num_selector_heads = 2;  // H^I
  std::size_t d_gate = 8;              // d_G
  std::size_t d_index = 8;             // d_I
  std::size_t bottleneck = 196;

  void validate(std::size_t d) const {
    if (d_gate > d / 2 || d_index > d / 2)
      throw DimensionError("IndexerConfig: gate/index dims must be <= d/2");
  }
};

// One branch's projections (dense, local, or sparse).
struct AttentionWeights {
  LinearLayer wq, wk, wv, wo;  // all [d x d]

  static AttentionWeights random_init(std::size_t d, Rng& rng) {
    return {LinearLayer::random_init(d, d, rng), LinearLayer::random_init(d, d, rng),
            LinearLayer::random_init(d, d, rng), LinearLayer::random_init(d, d, rng)};
  }
};

struct IndexerWeights {
  LinearLayer q_gate, k_gate;    // [d x H*d_G]
  LinearLayer q_index, k_index;  // [d x H*d_I]
  LinearLayer head_weight;       // [d x H], the SSA per-head weight W_w

  static IndexerWeights random_init(std::size_t d, const IndexerConfig& idx, Rng& rng) {
    idx.validate(d);
    const std::size_t h = idx.num_selector_heads;
    return {LinearLayer::random_init(d, h * idx.d_gate, rng),
            LinearLayer::random_init(d, h * idx.d_gate, rng),
            LinearLayer::random_init(d, h * idx.d_index, rng),
            LinearLayer::random_init(d, h * idx.d_index, rng),
            LinearLayer::random_init(d, h, rng)};
  }
};

// Learnable relative-position bias on the patch grid. Column displacement is
// taken modulo the grid width so the left and right panorama edges are
// neighbours; any pair touching the cls token shares one dedicated entry.
struct PositionBias {
  std::size_t grid_rows = 1, grid_cols = 1;
  std::vector<double> table;  // (2*grid_rows - 1) * grid_cols + 1 entries

  PositionBias() = default;
  PositionBias(std::size_t rows, std::size_t cols)
      : grid_rows(rows), grid_cols(cols), table((2 * rows - 1) * cols + 1, 0.0) {}

  static PositionBias random_init(std::size_t rows, std::size_t cols, Rng& rng) {
    PositionBias pe(rows, cols);
    for (double& v : pe.table) v = rng.uniform(-0.1, 0.1);
    return pe;
  }

  std::size_t cls_index() const { return table.size() - 1; }

  // t, s are token indices within the sequence.
  double lookup(std::size_t t, std::size_t s, bool has_cls) const {
    if (has_cls && (t == 0 || s == 0)) return table[cls_index()];
    const std::size_t off = has_cls ? 1 : 0;
    const std::size_t pt = t - off, ps = s - off;
    const long rt = static_cast<long>(pt / grid_cols), ct = static_cast<long>(pt % grid_cols);
    const long rs = static_cast<long>(ps / grid_cols), cs = static_cast<long>(ps % grid_cols);
    const long drow = rt - rs + static_cast<long>(grid_rows) - 1;
    long dcol = (ct - cs) % static_cast<long>(grid_cols);
    if (dcol < 0) dcol += static_cast<long>(grid_cols);
    return table[static_cast<std::size_t>(drow) * grid_cols + static_cast<std::size_t>(dcol)];
  }
};

// Records which (query, key) pairs a branch attended. Bit 0: local window,
// bit 1: sparse selection.
class AttentionMask {
 public:
  static constexpr std::uint8_t kLocal = 1;
  static constexpr std::uint8_t kSparse = 2;

  AttentionMask() = default;
  explicit AttentionMask(std::size_t n) : n_(n), cells_(n * n, 0) {}

  std::size_t size() const { return n_; }
  std::uint8_t at(std::size_t t, std::size_t s) const { return cells_[t * n_ + s]; }
  void mark(std::size_t t, std::size_t s, std::uint8_t bit) { cells_[t * n_ + s] |= bit; }
  bool attended(std::size_t t, std::size_t s) const { return at(t, s) != 0; }

  std::size_t pair_count() const {
    std::size_t c = 0;
    for (auto v : cells_)
      if (v) ++c;
    return c;
  }

  std::size_t pair_count(std::uint8_t bit) const {
    std::size_t c = 0;
    for (auto v : cells_)
      if (v & bit) ++c;
    return c;
  }

  static AttentionMask merge(const AttentionMask& a, const AttentionMask& b) {
    if (a.size() != b.size()) throw DimensionError("AttentionMask::merge: size mismatch");
    AttentionMask out(a.size());
    for (std::size_t i = 0; i < out.cells_.size(); ++i)
      out.cells_[i] = a.cells_[i] | b.cells_[i];
    return out;
  }

 private:
  std::size_t n_ = 0;
  std::vector<std::uint8_t> cells_;
};

// Single-head scaled dot-product attention: softmax(q k^T / sqrt(d)) v.
inline Matrix dense_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols())
    throw DimensionError("dense_attention: q " + q.shape_str() + " vs k " + k.shape_str());
  if (k.rows() != v.rows())
    throw DimensionError("dense_attention: k " + k.shape_str() + " vs v " + v.shape_str());
  Matrix logits = matmul(q, k.transposed());
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (double& x : logits.data()) x *= inv;
  return matmul(softmax_rows(logits), v);
}

namespace detail {

inline Matrix slice_cols(const Matrix& m, std::size_t lo, std::size_t n) {
  Matrix out(m.rows(), n);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = m(r, lo + c);
  return out;
}

inline void paste_cols(Matrix& dst, const Matrix& src, std::size_t lo) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) dst(r, lo + c) = src(r, c);
}

inline Matrix slice_rows(const Matrix& m, std::size_t lo, std::size_t n) {
  Matrix out(n, m.cols());
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(lo + r, c);
  return out;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx) {
  Matrix out(idx.size(), m.cols());
  for (std::size_t r = 0; r < idx.size(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(idx[r], c);
  return out;
}

// Attention over already-projected q/k/v, split into heads and re-concatenated.
inline Matrix multi_head_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                   std::size_t num_heads) {
  const std::size_t dh = q.cols() / num_heads;
  Matrix out(q.rows(), q.cols());
  for (std::size_t h = 0; h < num_heads; ++h) {
    Matrix oh = dense_attention(slice_cols(q, h * dh, dh), slice_cols(k, h * dh, dh),
                                slice_cols(v, h * dh, dh));
    paste_cols(out, oh, h * dh);
  }
  return out;
}

// Contiguous token windows; cls (when present) joins the first window.
inline std::vector<std::pair<std::size_t, std::size_t>> window_spans(std::size_t length,
                                                                     bool has_cls,
                                                                     std::size_t window) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  std::size_t start = 0;
  bool first = true;
  while (start < length) {
    std::size_t size = std::min(window + (first && has_cls ? 1 : 0), length - start);
    spans.emplace_back(start, size);
    start += size;
    first = false;
  }
  return spans;
}

}  // namespace detail

// Dense multi-head self-attention + projection (the MSA of the standard block).
inline Matrix msa(const Matrix& hidden, const AttentionWeights& w, const AttentionConfig& cfg) {
  cfg.head_dim();
  Matrix q = w.wq.forward(hidden);
  Matrix k = w.wk.forward(hidden);
  Matrix v = w.wv.forward(hidden);
  return w.wo.forward(detail::multi_head_attention(q, k, v, cfg.num_heads));
}

struct BranchResult {
  Matrix output;  // [L x d]
  AttentionMask mask;
};

// Sliding-window attention: non-overlapping windows of cfg.window_size,
// attention computed independently per window, outputs reassembled in order
// and projected by wo. A window larger than the sequence degenerates to
// dense attention.
inline BranchResult swa(const TokenSequence& x, const AttentionWeights& w_local,
                        const AttentionConfig& cfg) {
  const std::size_t L = x.length();
  cfg.head_dim();
  if (cfg.window_size < 1) throw DimensionError("swa: window size must be >= 1");
  auto spans = detail::window_spans(L, x.has_cls, cfg.window_size);

  Matrix assembled(L, x.dim());
  AttentionMask mask(L);
  parallel_for(spans.size(), cfg.num_workers, [&](std::size_t wi) {
    auto [lo, n] = spans[wi];
    Matrix hw = detail::slice_rows(x.hidden, lo, n);
    Matrix q = w_local.wq.forward(hw);
    Matrix k = w_local.wk.forward(hw);
    Matrix v = w_local.wv.forward(hw);
    Matrix ow = detail::multi_head_attention(q, k, v, cfg.num_heads);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < ow.cols(); ++c) assembled(lo + r, c) = ow(r, c);
    for (std::size_t t = 0; t < n; ++t)
      for (std::size_t s = 0; s < n; ++s) mask.mark(lo + t, lo + s, AttentionMask::kLocal);
  });
  return {w_local.wo.forward(assembled), std::move(mask)};
}

// SSA indexer scores: I[t,s] = sum_j w[t,j] * relu(qI[t,j] . kI[s,j]).
// The head weights come raw from the query projection, no normalization.
inline Matrix ssa_scores(const TokenSequence& x, const IndexerWeights& iw,
                         const IndexerConfig& idx) {
  const std::size_t L = x.length();
  const std::size_t H = idx.num_selector_heads;
  Matrix qi = iw.q_index.forward(x.hidden);
  Matrix ki = iw.k_index.forward(x.hidden);
  Matrix w = iw.head_weight.forward(x.hidden);  // [L x H]
  Matrix scores(L, L);
  for (std::size_t j = 0; j < H; ++j) {
    Matrix qj = detail::slice_cols(qi, j * idx.d_index, idx.d_index);
    Matrix kj = detail::slice_cols(ki, j * idx.d_index, idx.d_index);
    Matrix sim = matmul(qj, kj.transposed());
    for (std::size_t t = 0; t < L; ++t) {
      const double wt = w(t, j);
      for (std::size_t s = 0; s < L; ++s) scores(t, s) += wt * relu(sim(t, s));
    }
  }
  return scores;
}

// PSA indexer scores with the position-aware sigmoid gate. The gate MLP maps
// the scalar (qG . kG + PE[t,s]) to a logit; sigmoid is applied here. The
// score matrix is non-causal: every key is visible to every query.
inline Matrix psa_scores(const TokenSequence& x, const IndexerWeights& iw,
                         const IndexerConfig& idx, const PositionBias& pe, const Mlp& gate,
                         bool force_gate_one = false, std::size_t num_workers = 1) {
  const std::size_t L = x.length();
  const std::size_t H = idx.num_selector_heads;
  Matrix qg = iw.q_gate.forward(x.hidden);
  Matrix kg = iw.k_gate.forward(x.hidden);
  Matrix qi = iw.q_index.forward(x.hidden);
  Matrix ki = iw.k_index.forward(x.hidden);
  Matrix scores(L, L);
  parallel_for(L, num_workers, [&](std::size_t t) {
    for (std::size_t s = 0; s < L; ++s) {
      double acc = 0.0;
      const double bias = pe.lookup(t, s, x.has_cls);
      for (std::size_t j = 0; j < H; ++j) {
        const double sim = dot(qi.row_ptr(t) + j * idx.d_index,
                               ki.row_ptr(s) + j * idx.d_index, idx.d_index);
        const double r = relu(sim);
        if (r == 0.0 && !force_gate_one) {
          continue;  // gate is multiplied by zero either way
        }
        double g = 1.0;
        if (!force_gate_one) {
          const double arg = dot(qg.row_ptr(t) + j * idx.d_gate,
                                 kg.row_ptr(s) + j * idx.d_gate, idx.d_gate) + bias;
          Matrix in(1, 1, std::vector<double>{arg});
          g = sigmoid(gate.forward(in)(0, 0));
        }
        acc += g * r;
      }
      scores(t, s) = acc;
    }
  });
  return scores;
}

// Per-row Top-K. Ties break toward the lower key index; each set comes back
// sorted ascending.
inline std::vector<std::vector<std::size_t>> top_k_select(const Matrix& scores, std::size_t k) {
  if (k < 1) throw DimensionError("top_k_select: k must be >= 1");
  const std::size_t L = scores.cols();
  std::vector<std::vector<std::size_t>> sel(scores.rows());
  const std::size_t kk = std::min(k, L);
  for (std::size_t t = 0; t < scores.rows(); ++t) {
    std::vector<std::size_t> idx(L);
    std::iota(idx.begin(), idx.end(), 0);
    const double* row = scores.row_ptr(t);
    auto better = [row](std::size_t a, std::size_t b) {
      if (row[a] != row[b]) return row[a] > row[b];
      return a < b;
    };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(kk) - 1, idx.end(),
                     better);
    idx.resize(kk);
    std::sort(idx.begin(), idx.end());
    sel[t] = std::move(idx);
  }
  return sel;
}

struct PsaOptions {
  bool force_gate_one = false;  // debug bypass: gate fixed to 1
};

// Panoramic sparse attention: score, select Top-K keys per query, attend only
// over the selected key/value rows, then project.
inline BranchResult psa(const TokenSequence& x, const AttentionWeights& w_sparse,
                        const IndexerWeights& iw, const IndexerConfig& idx,
                        const PositionBias& pe, const Mlp& gate, const AttentionConfig& cfg,
                        const PsaOptions& opt = {}) {
  const std::size_t L = x.length();
  const std::size_t dh = cfg.head_dim();
  Matrix scores = psa_scores(x, iw, idx, pe, gate, opt.force_gate_one, cfg.num_workers);
  auto selected = top_k_select(scores, cfg.top_k);

  Matrix q = w_sparse.wq.forward(x.hidden);
  Matrix k = w_sparse.wk.forward(x.hidden);
  Matrix v = w_sparse.wv.forward(x.hidden);

  Matrix stacked(L, cfg.d);
  AttentionMask mask(L);
  parallel_for(L, cfg.num_workers, [&](std::size_t t) {
    const auto& st = selected[t];
    Matrix ks = detail::gather_rows(k, st);
    Matrix vs = detail::gather_rows(v, st);
    Matrix qt = detail::slice_rows(q, t, 1);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      Matrix oh = dense_attention(detail::slice_cols(qt, h * dh, dh),
                                  detail::slice_cols(ks, h * dh, dh),
                                  detail::slice_cols(vs, h * dh, dh));
      for (std::size_t c = 0; c < dh; ++c) stacked(t, h * dh + c) = oh(0, c);
    }
    for (std::size_t s : st) mask.mark(t, s, AttentionMask::kSparse);
  });
  return {w_sparse.wo.forward(stacked), std::move(mask)};
}

inline BranchResult ssa(const TokenSequence& x, const AttentionWeights& w_sparse,
                        const IndexerWeights& iw, const IndexerConfig& idx,
                        const AttentionConfig& cfg) {
  const std::size_t L = x.length();
  const std::size_t dh = cfg.head_dim();
  Matrix scores = ssa_scores(x, iw, idx);
  auto selected = top_k_select(scores, cfg.top_k);
  Matrix q = w_sparse.wq.forward(x.hidden);
  Matrix k = w_sparse.wk.forward(x.hidden);
  Matrix v = w_sparse.wv.forward(x.hidden);
  Matrix stacked(L, cfg.d);
  AttentionMask mask(L);
  parallel_for(L, cfg.num_workers, [&](std::size_t t) {
    const auto& st = selected[t];
    Matrix ks = detail::gather_rows(k, st);
    Matrix vs = detail::gather_rows(v, st);
    Matrix qt = detail::slice_rows(q, t, 1);
    for (std::size_t h = 0; h < cfg.num_heads; ++h) {
      Matrix oh = dense_attention(detail::slice_cols(qt, h * dh, dh),
                                  detail::slice_cols(ks, h * dh, dh),
                                  detail::slice_cols(vs, h * dh, dh));
      for (std::size_t c = 0; c < dh; ++c) stacked(t, h * dh + c) = oh(0, c);
    }
    for (std::size_t s : st) mask.mark(t, s, AttentionMask::kSparse);
  });
  return {w_sparse.wo.forward(stacked), std::move(mask)};
}

struct FfnWeights {
  LinearLayer in, out;  // d -> 4d -> d

  static FfnWeights random_init(std::size_t d, Rng& rng) {
    return {LinearLayer::random_init(d, 4 * d, rng), LinearLayer::random_init(4 * d, d, rng)};
  }

  Matrix forward(const Matrix& x) const { return out.forward(relu(in.forward(x))); }
};

struct LayerNormParams {
  std::vector<double> gamma, beta;

  static LayerNormParams identity(std::size_t d) {
    return {std::vector<double>(d, 1.0), std::vector<double>(d, 0.0)};
  }
};

struct MsaBlockWeights {
  AttentionWeights attn;
  FfnWeights ffn;
  LayerNormParams ln1, ln2;

  static MsaBlockWeights random_init(std::size_t d, Rng& rng) {
    return {AttentionWeights::random_init(d, rng), FfnWeights::random_init(d, rng),
            LayerNormParams::identity(d), LayerNormParams::identity(d)};
  }
};

// Standard transformer block: LN(MSA(h) + h) then LN(FFN(.) + .).
inline TokenSequence msa_block(const TokenSequence& x, const MsaBlockWeights& w,
                               const AttentionConfig& cfg) {
  if (x.dim() != cfg.d)
    throw DimensionError("msa_block: hidden dim " + std::to_string(x.dim()) + " vs cfg.d " +
                         std::to_string(cfg.d));
  Matrix mid = layer_norm(add(msa(x.hidden, w.attn, cfg), x.hidden), w.ln1.gamma, w.ln1.beta,
                          cfg.ln_eps);
  Matrix out = layer_norm(add(w.ffn.forward(mid), mid), w.ln2.gamma, w.ln2.beta, cfg.ln_eps);
  return {std::move(out), x.has_cls};
}

struct PhaBlockWeights {
  AttentionWeights local, sparse;  // disjoint branch projections
  IndexerWeights indexer;
  PositionBias pe;
  Mlp gate;  // scalar in -> 16 -> scalar out; sigmoid applied by the caller
  FfnWeights ffn;
  LayerNormParams ln1, ln2;

  static PhaBlockWeights random_init(std::size_t d, const IndexerConfig& idx,
                                     std::size_t grid_rows, std::size_t grid_cols, Rng& rng) {
    return {AttentionWeights::random_init(d, rng),
            AttentionWeights::random_init(d, rng),
            IndexerWeights::random_init(d, idx, rng),
            PositionBias::random_init(grid_rows, grid_cols, rng),
            Mlp::random_init({1, 16, 1}, rng),
            FfnWeights::random_init(d, rng),
            LayerNormParams::identity(d),
            LayerNormParams::identity(d)};
  }
};

struct PhaResult {
  TokenSequence out;
  AttentionMask local_mask, sparse_mask;
};

// Hybrid block: h~ = LN(SWA(h) + PSA(h) + h), h' = LN(FFN(h~) + h~).
inline PhaResult pha_block(const TokenSequence& x, const PhaBlockWeights& w,
                           const IndexerConfig& idx, const AttentionConfig& cfg,
                           const PsaOptions& opt = {}) {
  if (x.dim() != cfg.d)
    throw DimensionError("pha_block: hidden dim " + std::to_string(x.dim()) + " vs cfg.d " +
                         std::to_string(cfg.d));
  BranchResult local = swa(x, w.local, cfg);
  BranchResult sparse = psa(x, w.sparse, w.indexer, idx, w.pe, w.gate, cfg, opt);
  Matrix mid = layer_norm(add(add(local.output, sparse.output), x.hidden), w.ln1.gamma,
                          w.ln1.beta, cfg.ln_eps);
  Matrix out = layer_norm(add(w.ffn.forward(mid), mid), w.ln2.gamma, w.ln2.beta, cfg.ln_eps);
  return {{std::move(out), x.has_cls}, std::move(local.mask), std::move(sparse.mask)};
}

// PGM rendering of a mask. Plain masks: attended = 255. Masks mixing both
// branches: sparse-selected = 255, window-only = 128.
inline GrayImage render_mask(const AttentionMask& mask) {
  const std::size_t n = mask.size();
  bool has_local = false, has_sparse = false;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t s = 0; s < n; ++s) {
      has_local |= (mask.at(t, s) & AttentionMask::kLocal) != 0;
      has_sparse |= (mask.at(t, s) & AttentionMask::kSparse) != 0;
    }
  const bool hybrid = has_local && has_sparse;
  GrayImage img(n, n, 0);
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t s = 0; s < n; ++s) {
      const std::uint8_t v = mask.at(t, s);
      if (!v) continue;
      if (!hybrid)
        img.at(s, t) = 255;
      else if (v & AttentionMask::kSparse)
        img.at(s, t) = 255;
      else
        img.at(s, t) = 128;
    }
  return img;
}

inline void export_mask(const AttentionMask& mask, const std::string& path) {
  write_pgm(path, render_mask(mask));
}

// ---- named-matrix checkpoint container ----

struct Checkpoint {
  std::vector<std::pair<std::string, Matrix>> entries;

  void add(const std::string& name, Matrix m) { entries.emplace_back(name, std::move(m)); }
  void add_vector(const std::string& name, const std::vector<double>& v) {
    entries.emplace_back(name, Matrix(1, v.size(), v));
  }

  const Matrix& get(const std::string& name) const {
    for (const auto& [n, m] : entries)
      if (n == name) return m;
    throw FileError("checkpoint: no entry named " + name);
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw FileError("cannot open for write: " + path);
    os << "panokit-checkpoint 1\n" << entries.size() << "\n";
    for (const auto& [name, m] : entries) {
      os << name << "\n";
      write_matrix_text(os, m);
    }
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw FileError("cannot open: " + path);
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "panokit-checkpoint" || version != 1)
      throw FileError("checkpoint: bad header in " + path);
    std::size_t count = 0;
    is >> count;
    Checkpoint ck;
    for (std::size_t i = 0; i < count; ++i) {
      std::string name;
      is >> name;
      ck.entries.emplace_back(name, read_matrix_text(is));
    }
    return ck;
  }
};

}  // namespace panokit
