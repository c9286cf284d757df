#include "vicl/flow_analysis.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"

namespace vicl {

SaliencyMatrix saliency_matrix(const LayerTensor& attention, const LayerTensor& grad, std::size_t layer) {
  if (attention.num_heads != grad.num_heads || attention.seq_len != grad.seq_len) {
    fail(Errc::invalid_argument, "saliency: attention and grad shapes differ");
  }
  const std::size_t s = attention.seq_len;
  const std::size_t cells = attention.num_heads * s * s;
  if (attention.data.size() != cells || grad.data.size() != cells) {
    fail(Errc::invalid_argument, "saliency: tensor size does not match [head][seq][seq]");
  }
  SaliencyMatrix out{layer, s, std::vector<double>(s * s, 0.0)};
  for (std::size_t h = 0; h < attention.num_heads; ++h) {
    const std::size_t base = h * s * s;
    for (std::size_t c = 0; c < s * s; ++c) out.values[c] += std::abs(attention.data[base + c] * grad.data[base + c]);
  }
  return out;
}

SaliencyMatrix saliency_matrix(const TraceBundle& bundle, std::size_t layer) {
  if (layer >= bundle.num_layers) fail(Errc::invalid_argument, "saliency: layer out of range");
  const std::size_t stride = bundle.layer_stride();
  const LayerTensor attention{bundle.num_heads, bundle.seq_len,
                              std::span<const double>(bundle.attention).subspan(layer * stride, stride)};
  const LayerTensor grad{bundle.num_heads, bundle.seq_len,
                         std::span<const double>(bundle.grad).subspan(layer * stride, stride)};
  return saliency_matrix(attention, grad, layer);
}

IndexSets build_index_sets(std::span<const std::size_t> label_positions, std::size_t target_position,
                           std::pair<std::size_t, std::size_t> image_span, std::size_t seq_len) {
  auto bad = [](const std::string& why) { fail(Errc::invalid_argument, "index sets: " + why); };
  const auto [v_begin, v_end] = image_span;
  if (target_position >= seq_len) bad("target position out of range");
  if (v_begin > v_end || v_end > seq_len) bad("image span out of range");
  if (v_end > target_position) bad("image span must precede the target position");
  std::set<std::size_t> labels;
  for (std::size_t p : label_positions) {
    if (p >= seq_len) bad("label position " + std::to_string(p) + " out of range");
    if (p >= target_position) bad("label position " + std::to_string(p) + " is not before the target");
    if (p >= v_begin && p < v_end) bad("label position " + std::to_string(p) + " lies inside the image span");
    if (!labels.insert(p).second) bad("duplicate label position " + std::to_string(p));
  }

  IndexSets sets;
  sets.seq_len = seq_len;
  for (std::size_t i = 1; i < seq_len; ++i) {
    const bool label_row = labels.count(i) > 0;
    for (std::size_t j = 0; j < i; ++j) {
      if (label_row) {
        sets.wp.emplace_back(i, j);
      } else if (i == target_position && labels.count(j)) {
        sets.pq.emplace_back(i, j);
      } else if (i == target_position && j >= v_begin && j < v_end) {
        sets.vq.emplace_back(i, j);
      } else {
        sets.ww.emplace_back(i, j);
      }
    }
  }
  return sets;
}

namespace {

double mean_over(const SaliencyMatrix& s, const std::vector<Cell>& cells) {
  if (cells.empty()) return 0.0;
  double total = 0.0;
  for (const auto& [i, j] : cells) total += s.at(i, j);
  return total / static_cast<double>(cells.size());
}

}  // namespace

FlowScores flow_scores(const SaliencyMatrix& saliency, const IndexSets& sets) {
  if (saliency.seq_len != sets.seq_len) fail(Errc::invalid_argument, "flow scores: sequence lengths differ");
  FlowScores out;
  out.layer = saliency.layer;
  out.s_wp = mean_over(saliency, sets.wp);
  out.s_pq = mean_over(saliency, sets.pq);
  out.s_vq = mean_over(saliency, sets.vq);
  out.s_ww = mean_over(saliency, sets.ww);
  out.n_wp = sets.wp.size();
  out.n_pq = sets.pq.size();
  out.n_vq = sets.vq.size();
  out.n_ww = sets.ww.size();
  return out;
}

std::vector<FlowScores> FlowReport::head_averaged() const {
  std::vector<FlowScores> out = layers;
  const double h = num_heads ? static_cast<double>(num_heads) : 1.0;
  for (auto& f : out) {
    f.s_wp /= h;
    f.s_pq /= h;
    f.s_vq /= h;
    f.s_ww /= h;
  }
  return out;
}

FlowReport analyze_trace(const TraceBundle& bundle) {
  bundle.validate();
  const auto sets =
      build_index_sets(bundle.label_positions, bundle.target_position, bundle.image_span, bundle.seq_len);
  FlowReport report;
  report.num_heads = bundle.num_heads;
  for (std::size_t l = 0; l < bundle.num_layers; ++l) report.layers.push_back(flow_scores(saliency_matrix(bundle, l), sets));
  return report;
}

FlowReport mean_report(std::span<const FlowReport> reports) {
  if (reports.empty()) fail(Errc::invalid_argument, "mean_report: no reports");
  FlowReport out = reports.front();
  for (std::size_t r = 1; r < reports.size(); ++r) {
    if (reports[r].layers.size() != out.layers.size()) fail(Errc::data, "traces have different layer counts");
    if (reports[r].num_heads != out.num_heads) fail(Errc::data, "traces have different head counts");
    for (std::size_t l = 0; l < out.layers.size(); ++l) {
      auto& a = out.layers[l];
      const auto& b = reports[r].layers[l];
      a.s_wp += b.s_wp;
      a.s_pq += b.s_pq;
      a.s_vq += b.s_vq;
      a.s_ww += b.s_ww;
      a.n_wp += b.n_wp;
      a.n_pq += b.n_pq;
      a.n_vq += b.n_vq;
      a.n_ww += b.n_ww;
    }
  }
  const double n = static_cast<double>(reports.size());
  for (auto& a : out.layers) {
    a.s_wp /= n;
    a.s_pq /= n;
    a.s_vq /= n;
    a.s_ww /= n;
  }
  return out;
}

void write_flow_csv(const std::vector<FlowScores>& layers, std::ostream& out) {
  out << "layer,s_wp,s_pq,s_vq,s_ww\n";
  std::ostringstream row;
  row << std::setprecision(17);
  for (const auto& f : layers) {
    row.str({});
    row << f.layer << ',' << f.s_wp << ',' << f.s_pq << ',' << f.s_vq << ',' << f.s_ww << '\n';
    out << row.str();
  }
}

nlohmann::json flow_sidecar_json(const FlowReport& report) {
  nlohmann::json layers = nlohmann::json::array();
  const auto averaged = report.head_averaged();
  for (std::size_t l = 0; l < report.layers.size(); ++l) {
    const auto& f = report.layers[l];
    const auto& a = averaged[l];
    layers.push_back({{"layer", f.layer},
                      {"set_sizes", {{"wp", f.n_wp}, {"pq", f.n_pq}, {"vq", f.n_vq}, {"ww", f.n_ww}}},
                      {"scores", {{"s_wp", f.s_wp}, {"s_pq", f.s_pq}, {"s_vq", f.s_vq}, {"s_ww", f.s_ww}}},
                      {"head_averaged", {{"s_wp", a.s_wp}, {"s_pq", a.s_pq}, {"s_vq", a.s_vq}, {"s_ww", a.s_ww}}}});
  }
  return {{"num_layers", report.layers.size()}, {"num_heads", report.num_heads}, {"layers", layers}};
}

}  // namespace vicl
