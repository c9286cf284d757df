#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/inference_client.hpp"
#include "vicl/splitmix64.hpp"

namespace vicl {

namespace {

constexpr double kRowSumTolerance = 1e-4;

[[noreturn]] void violation(const std::string& what) { fail(Errc::invariant, "trace bundle: " + what); }

void check_positions(const TraceBundle& t) {
  std::set<std::size_t> seen;
  for (std::size_t p : t.label_positions) {
    if (p >= t.seq_len) violation("label position " + std::to_string(p) + " out of range");
    if (!seen.insert(p).second) violation("duplicate label position " + std::to_string(p));
  }
  if (t.target_position >= t.seq_len) violation("target position out of range");
  if (seen.count(t.target_position)) violation("target position overlaps a label position");
  const auto [begin, end] = t.image_span;
  if (begin > end || end > t.seq_len) violation("image span out of range");
  for (std::size_t v = begin; v < end; ++v) {
    if (seen.count(v)) violation("image span overlaps label position " + std::to_string(v));
    if (v == t.target_position) violation("image span overlaps the target position");
  }
}

}  // namespace

void TraceBundle::validate() const {
  if (num_layers == 0 || num_heads == 0 || seq_len == 0) violation("dimensions must be positive");
  const std::size_t expected = num_layers * layer_stride();
  if (attention.size() != expected) violation("attention has wrong element count");
  if (grad.size() != expected) violation("grad has wrong element count");
  for (std::size_t l = 0; l < num_layers; ++l) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      for (std::size_t i = 0; i < seq_len; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < seq_len; ++j) {
          const double a = attention_at(l, h, i, j);
          const double g = grad_at(l, h, i, j);
          if (!std::isfinite(a) || !std::isfinite(g)) violation("non-finite value");
          if (j > i && a != 0.0) {
            violation("non-causal attention at layer " + std::to_string(l) + " head " + std::to_string(h) +
                      " (" + std::to_string(i) + "," + std::to_string(j) + ")");
          }
          if (a < 0.0) violation("negative attention weight");
          row += a;
        }
        if (std::abs(row - 1.0) > kRowSumTolerance) {
          violation("attention row " + std::to_string(i) + " of layer " + std::to_string(l) + " head " +
                    std::to_string(h) + " sums to " + std::to_string(row));
        }
      }
    }
  }
  check_positions(*this);
}

namespace {

nlohmann::json nest(const std::vector<double>& flat, const TraceBundle& t) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < t.num_layers; ++l) {
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t h = 0; h < t.num_heads; ++h) {
      nlohmann::json rows = nlohmann::json::array();
      for (std::size_t i = 0; i < t.seq_len; ++i) {
        const auto* begin = flat.data() + t.offset(l, h, i, 0);
        rows.push_back(std::vector<double>(begin, begin + t.seq_len));
      }
      heads.push_back(std::move(rows));
    }
    layers.push_back(std::move(heads));
  }
  return layers;
}

std::vector<double> flatten(const nlohmann::json& j, const TraceBundle& t, const char* name) {
  std::vector<double> flat;
  flat.reserve(t.num_layers * t.layer_stride());
  auto shape_error = [&] { fail(Errc::invariant, std::string("trace bundle: ") + name + " has wrong shape"); };
  if (!j.is_array() || j.size() != t.num_layers) shape_error();
  for (const auto& heads : j) {
    if (!heads.is_array() || heads.size() != t.num_heads) shape_error();
    for (const auto& rows : heads) {
      if (!rows.is_array() || rows.size() != t.seq_len) shape_error();
      for (const auto& row : rows) {
        if (!row.is_array() || row.size() != t.seq_len) shape_error();
        for (const auto& v : row) flat.push_back(v.get<double>());
      }
    }
  }
  return flat;
}

}  // namespace

void to_json(nlohmann::json& j, const TraceBundle& v) {
  j = nlohmann::json{{"num_layers", v.num_layers},
                     {"num_heads", v.num_heads},
                     {"seq_len", v.seq_len},
                     {"attention", nest(v.attention, v)},
                     {"grad", nest(v.grad, v)},
                     {"label_positions", v.label_positions},
                     {"target_position", v.target_position},
                     {"image_span", {v.image_span.first, v.image_span.second}}};
}

void from_json(const nlohmann::json& j, TraceBundle& v) {
  v.num_layers = j.at("num_layers").get<std::size_t>();
  v.num_heads = j.at("num_heads").get<std::size_t>();
  v.seq_len = j.at("seq_len").get<std::size_t>();
  v.attention = flatten(j.at("attention"), v, "attention");
  v.grad = flatten(j.at("grad"), v, "grad");
  v.label_positions = j.at("label_positions").get<std::vector<std::size_t>>();
  v.target_position = j.at("target_position").get<std::size_t>();
  const auto& span = j.at("image_span");
  if (!span.is_array() || span.size() != 2) fail(Errc::invariant, "trace bundle: image_span must be [begin, end]");
  v.image_span = {span[0].get<std::size_t>(), span[1].get<std::size_t>()};
}

TraceBundle load_trace_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::data, "cannot read trace file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::data, "trace file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  TraceBundle bundle;
  try {
    bundle = j.get<TraceBundle>();
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::data, "trace file '" + path.string() + "': " + e.what());
  }
  bundle.validate();
  return bundle;
}

void save_trace_file(const TraceBundle& bundle, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::data, "cannot write trace file '" + path.string() + "'");
  out << nlohmann::json(bundle).dump() << '\n';
}

TraceBundle make_synthetic_trace(std::uint64_t seed, std::size_t num_layers, std::size_t num_heads,
                                 std::size_t seq_len, std::vector<std::size_t> label_positions,
                                 std::size_t target_position,
                                 std::pair<std::size_t, std::size_t> image_span) {
  TraceBundle t;
  t.num_layers = num_layers;
  t.num_heads = num_heads;
  t.seq_len = seq_len;
  t.label_positions = std::move(label_positions);
  t.target_position = target_position;
  t.image_span = image_span;
  t.attention.assign(num_layers * t.layer_stride(), 0.0);
  t.grad.assign(num_layers * t.layer_stride(), 0.0);

  SplitMix64 rng(seed);
  for (std::size_t l = 0; l < num_layers; ++l) {
    for (std::size_t h = 0; h < num_heads; ++h) {
      for (std::size_t i = 0; i < seq_len; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          const double w = 0.05 + rng.unit();
          t.attention[t.offset(l, h, i, j)] = w;
          total += w;
        }
        for (std::size_t j = 0; j <= i; ++j) {
          t.attention[t.offset(l, h, i, j)] /= total;
          t.grad[t.offset(l, h, i, j)] = 2.0 * rng.unit() - 1.0;
        }
      }
    }
  }
  t.validate();
  return t;
}

}  // namespace vicl
