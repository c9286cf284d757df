#pragma once

// Information-flow analysis over attention traces. The saliency of a cell is
// |attention * d(loss)/d(attention)| summed over heads; the four significance
// scores average saliency over the label-word, label-to-target,
// image-to-target and remaining lower-triangle regions.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vicl/inference_client.hpp"

namespace vicl {

struct SaliencyMatrix {
  std::size_t layer = 0;
  std::size_t seq_len = 0;
  std::vector<double> values;  // row-major seq_len x seq_len

  double at(std::size_t i, std::size_t j) const { return values[i * seq_len + j]; }
};

/// Per-layer tensor view: [head][seq][seq], row-major.
struct LayerTensor {
  std::size_t num_heads = 0;
  std::size_t seq_len = 0;
  std::span<const double> data;
};

/// values[i][j] = sum_h |attention[h][i][j] * grad[h][i][j]| (elementwise).
/// Throws Error(Errc::invalid_argument) on shape mismatch.
SaliencyMatrix saliency_matrix(const LayerTensor& attention, const LayerTensor& grad, std::size_t layer = 0);
SaliencyMatrix saliency_matrix(const TraceBundle& bundle, std::size_t layer);

using Cell = std::pair<std::size_t, std::size_t>;  // (row i, column j), j < i

struct IndexSets {
  std::size_t seq_len = 0;
  std::vector<Cell> wp;  // (p_k, j) for j < p_k
  std::vector<Cell> pq;  // (q, p_k)
  std::vector<Cell> vq;  // (q, v) for v in the image span
  std::vector<Cell> ww;  // every other cell with j < i
};

/// Preconditions: positions distinct, in range, disjoint from the image span
/// and the target; the target lies after every label position and the image
/// span. Violations throw Error(Errc::invalid_argument).
IndexSets build_index_sets(std::span<const std::size_t> label_positions, std::size_t target_position,
                           std::pair<std::size_t, std::size_t> image_span, std::size_t seq_len);

struct FlowScores {
  std::size_t layer = 0;
  double s_wp = 0.0;
  double s_pq = 0.0;
  double s_vq = 0.0;
  double s_ww = 0.0;
  std::size_t n_wp = 0;
  std::size_t n_pq = 0;
  std::size_t n_vq = 0;
  std::size_t n_ww = 0;
};

/// Mean saliency over each set; an empty set scores 0.
FlowScores flow_scores(const SaliencyMatrix& saliency, const IndexSets& sets);

struct FlowReport {
  std::size_t num_heads = 0;
  std::vector<FlowScores> layers;  // one per layer, saliency summed over heads

  /// Per-layer scores divided by the head count.
  std::vector<FlowScores> head_averaged() const;
};

FlowReport analyze_trace(const TraceBundle& bundle);

/// Layer-wise mean of several reports (all must have the same layer count).
/// Set sizes in the result are totals over the reports.
FlowReport mean_report(std::span<const FlowReport> reports);

/// "layer,s_wp,s_pq,s_vq,s_ww" header plus one row per layer.
void write_flow_csv(const std::vector<FlowScores>& layers, std::ostream& out);
/// Set sizes and the head-averaged curves.
nlohmann::json flow_sidecar_json(const FlowReport& report);

}  // namespace vicl
