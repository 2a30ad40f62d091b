#pragma once

// Exact attention two ways: a dense reference and a simulated ring of
// workers that rotate key/value blocks and merge them with online softmax.

#include <cmath>
#include <cstdint>
#include <limits>
#include <thread>
#include <vector>

#include "omt/error.hpp"
#include "omt/matrix.hpp"

namespace omt::attention {

// Q and K are [seq_len x head_dim] per head. V is [seq_len x value_dim]; value_dim
// usually equals head_dim but may differ (identity probes use V = I).
struct AttentionInput {
  std::vector<Matrix> q, k, v;
  bool causal = false;

  std::size_t num_heads() const { return q.size(); }
  std::size_t seq_len() const { return q.empty() ? 0 : q.front().rows; }

  void validate() const {
    detail::require_input(!q.empty(), "attention input has no heads");
    detail::require_input(k.size() == q.size() && v.size() == q.size(), "Q/K/V head counts differ");
    const std::size_t n = q.front().rows, d = q.front().cols;
    detail::require_input(n > 0 && d > 0, "empty Q matrix");
    for (std::size_t h = 0; h < q.size(); ++h) {
      detail::require_input(q[h].rows == n && k[h].rows == n && v[h].rows == n, "seq_len differs across Q/K/V");
      detail::require_input(q[h].cols == d && k[h].cols == d, "head_dim differs between Q and K");
      detail::require_input(v[h].cols > 0, "empty V matrix");
      detail::require_input(q[h].all_finite() && k[h].all_finite() && v[h].all_finite(),
                            "attention input contains NaN or infinity");
    }
  }
};

inline AttentionInput random_input(std::size_t seq_len, std::size_t head_dim, std::size_t heads, bool causal,
                                   Rng& rng) {
  AttentionInput in;
  in.causal = causal;
  for (std::size_t h = 0; h < heads; ++h) {
    in.q.push_back(Matrix::random(seq_len, head_dim, rng));
    in.k.push_back(Matrix::random(seq_len, head_dim, rng));
    in.v.push_back(Matrix::random(seq_len, head_dim, rng));
  }
  return in;
}

// Dense softmax(Q K^T / sqrt(d)) V in double precision.
inline std::vector<Matrix> naive_attention(const AttentionInput& in) {
  in.validate();
  const std::size_t n = in.seq_len();
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.q.front().cols));
  std::vector<Matrix> out;
  std::vector<double> w(n);
  for (std::size_t h = 0; h < in.num_heads(); ++h) {
    const Matrix &Q = in.q[h], &K = in.k[h], &V = in.v[h];
    Matrix O(n, V.cols);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t visible = in.causal ? i + 1 : n;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        w[j] = dot(Q.row(i), K.row(j)) * scale;
        mx = std::max(mx, w[j]);
      }
      double denom = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        w[j] = std::exp(w[j] - mx);
        denom += w[j];
      }
      for (std::size_t j = 0; j < visible; ++j) {
        const double p = w[j] / denom;
        for (std::size_t c = 0; c < V.cols; ++c) O(i, c) += p * V(j, c);
      }
    }
    out.push_back(std::move(O));
  }
  return out;
}

struct RingConfig {
  std::size_t num_workers = 1;
  std::size_t block_size = 1;
  // Worker w starts with KV block (w + start_offset) mod num_workers.
  std::size_t start_offset = 0;
  // Run the workers of each round on separate threads (barrier between rounds).
  bool parallel = false;

  void validate(std::size_t seq_len) const {
    detail::require_config(num_workers >= 1, "num_workers must be >= 1");
    detail::require_config(block_size >= 1, "block_size must be >= 1");
    detail::require_config(num_workers * block_size >= seq_len, "num_workers * block_size must cover seq_len");
  }
};

struct Message {
  std::size_t sender = 0;
  std::size_t receiver = 0;
  std::size_t round = 0;
  std::size_t block = 0;

  bool operator==(const Message&) const = default;
};

// Running statistics for one worker's query block, one head.
struct OnlineSoftmaxState {
  std::vector<double> running_max;
  std::vector<double> running_denominator;
  Matrix acc;

  OnlineSoftmaxState(std::size_t rows, std::size_t value_dim)
      : running_max(rows, -std::numeric_limits<double>::infinity()),
        running_denominator(rows, 0.0),
        acc(rows, value_dim) {}
};

struct RingResult {
  std::vector<Matrix> output;
  std::vector<Message> messages;
};

namespace detail {

struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive; begin == end for workers past the sequence
};

inline Span block_span(std::size_t block, std::size_t block_size, std::size_t seq_len) {
  const std::size_t b = std::min(block * block_size, seq_len);
  return {b, std::min(b + block_size, seq_len)};
}

// Folds one key/value block into the running state of one query block.
inline void accumulate_block(OnlineSoftmaxState& st, const Matrix& Q, const Matrix& K, const Matrix& V, Span qs,
                             Span ks, bool causal, double scale, std::vector<double>& scores) {
  for (std::size_t qi = qs.begin; qi < qs.end; ++qi) {
    const std::size_t r = qi - qs.begin;
    const std::size_t kend = causal ? std::min(ks.end, qi + 1) : ks.end;
    if (kend <= ks.begin) continue;  // fully masked

    double block_max = -std::numeric_limits<double>::infinity();
    for (std::size_t kj = ks.begin; kj < kend; ++kj) {
      scores[kj - ks.begin] = dot(Q.row(qi), K.row(kj)) * scale;
      block_max = std::max(block_max, scores[kj - ks.begin]);
    }
    const double m_old = st.running_max[r];
    const double m_new = std::max(m_old, block_max);
    const double correction = std::exp(m_old - m_new);

    double block_sum = 0.0;
    auto acc_row = st.acc.row(r);
    for (double& a : acc_row) a *= correction;
    for (std::size_t kj = ks.begin; kj < kend; ++kj) {
      const double p = std::exp(scores[kj - ks.begin] - m_new);
      block_sum += p;
      const auto v_row = V.row(kj);
      for (std::size_t c = 0; c < acc_row.size(); ++c) acc_row[c] += p * v_row[c];
    }
    st.running_denominator[r] = st.running_denominator[r] * correction + block_sum;
    st.running_max[r] = m_new;
  }
}

}  // namespace detail

inline RingResult ring_attention(const AttentionInput& in, const RingConfig& ring) {
  in.validate();
  const std::size_t n = in.seq_len();
  ring.validate(n);
  const std::size_t workers = ring.num_workers;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in.q.front().cols));

  // state[w][h]
  std::vector<std::vector<OnlineSoftmaxState>> state(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const auto qs = detail::block_span(w, ring.block_size, n);
    for (std::size_t h = 0; h < in.num_heads(); ++h) state[w].emplace_back(qs.end - qs.begin, in.v[h].cols);
  }
  // held[w] = id of the KV block currently resident on worker w.
  std::vector<std::size_t> held(workers);
  for (std::size_t w = 0; w < workers; ++w) held[w] = (w + ring.start_offset) % workers;

  RingResult result;
  result.messages.reserve(workers * (workers - 1));

  auto run_worker = [&](std::size_t w) {
    std::vector<double> scores(ring.block_size);
    const auto qs = detail::block_span(w, ring.block_size, n);
    const auto ks = detail::block_span(held[w], ring.block_size, n);
    for (std::size_t h = 0; h < in.num_heads(); ++h) {
      detail::accumulate_block(state[w][h], in.q[h], in.k[h], in.v[h], qs, ks, in.causal, scale, scores);
    }
  };

  for (std::size_t round = 0; round < workers; ++round) {
    if (ring.parallel && workers > 1) {
      std::vector<std::jthread> threads;
      threads.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(run_worker, w);
    } else {
      for (std::size_t w = 0; w < workers; ++w) run_worker(w);
    }
    if (round + 1 == workers) break;
    // Each worker forwards its block to the next worker on the ring.
    std::vector<std::size_t> next(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t to = (w + 1) % workers;
      next[to] = held[w];
      result.messages.push_back({w, to, round, held[w]});
    }
    held = std::move(next);
  }

  for (std::size_t h = 0; h < in.num_heads(); ++h) {
    Matrix O(n, in.v[h].cols);
    for (std::size_t w = 0; w < workers; ++w) {
      const auto qs = detail::block_span(w, ring.block_size, n);
      const OnlineSoftmaxState& st = state[w][h];
      for (std::size_t r = 0; r < qs.end - qs.begin; ++r) {
        for (std::size_t c = 0; c < O.cols; ++c) O(qs.begin + r, c) = st.acc(r, c) / st.running_denominator[r];
      }
    }
    result.output.push_back(std::move(O));
  }
  return result;
}

inline double max_abs_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  omt::detail::require_input(a.size() == b.size(), "head count mismatch");
  double m = 0.0;
  for (std::size_t h = 0; h < a.size(); ++h) m = std::max(m, max_abs_diff(a[h], b[h]));
  return m;
}

}  // namespace omt::attention
