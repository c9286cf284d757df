#include "vicl/demo_store.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vicl/error.hpp"
#include "vicl/parallel.hpp"

namespace vicl {

static_assert(std::numeric_limits<float>::is_iec559, "index format requires IEEE-754 floats");

// ---------------------------------------------------------------------------
// Manifest

Manifest load_manifest(const std::filesystem::path& path, DatasetKind kind) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::data, "cannot open manifest '" + path.string() + "'");
  const auto base = path.parent_path();

  Manifest out;
  std::vector<std::string> labels;
  std::set<std::string> seen_labels;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto malformed = [&](const std::string& why) {
      fail(Errc::data, path.string() + ":" + std::to_string(line_no) + ": malformed manifest record: " + why);
    };

    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      malformed(e.what());
    }
    if (!j.is_object()) malformed("not a JSON object");
    for (const char* key : {"id", "image_path", "label", "split"}) {
      if (!j.contains(key) || !j.at(key).is_string()) malformed(std::string("missing string field \"") + key + "\"");
    }
    if (j.contains("sublabel") && !j.at("sublabel").is_null() && !j.at("sublabel").is_string()) {
      malformed("\"sublabel\" must be a string or null");
    }

    DemonstrationCandidate c;
    c.id = j.at("id").get<std::string>();
    if (c.id.empty()) malformed("empty id");
    if (!seen_ids.insert(c.id).second) {
      fail(Errc::data, path.string() + ":" + std::to_string(line_no) + ": duplicate id '" + c.id + "'");
    }
    std::filesystem::path image_path = j.at("image_path").get<std::string>();
    if (image_path.is_relative()) image_path = base / image_path;
    c.image = ImageRef::from_path(image_path);
    c.question = std::string(task_question(kind));
    c.answer = j.at("label").get<std::string>();
    if (c.answer.empty()) malformed("empty label");
    if (j.contains("sublabel") && j.at("sublabel").is_string()) c.sublabel = j.at("sublabel").get<std::string>();

    if (seen_labels.insert(lowercase(c.answer)).second) labels.push_back(c.answer);

    const auto split = j.at("split").get<std::string>();
    if (split == "candidates") {
      out.candidates.push_back(std::move(c));
    } else if (split == "test") {
      out.tests.push_back(std::move(c));
    } else {
      malformed("split must be \"candidates\" or \"test\", got \"" + split + "\"");
    }
  }
  if (seen_ids.empty()) fail(Errc::data, "manifest '" + path.string() + "' has no records");
  out.labels = LabelSet(std::move(labels), kind);
  return out;
}

// ---------------------------------------------------------------------------
// EmbeddingIndex

EmbeddingIndex::EmbeddingIndex(std::size_t dim) : dim_(dim) {
  if (dim == 0) fail(Errc::invalid_argument, "index dimension must be positive");
}

void EmbeddingIndex::add(std::string id, EmbeddingVector vector) {
  if (dim_ == 0) fail(Errc::invalid_argument, "index has no dimension");
  if (vector.dim() != dim_) {
    fail(Errc::dimension_mismatch, "entry '" + id + "' has dimension " + std::to_string(vector.dim()) +
                                       ", index dimension is " + std::to_string(dim_));
  }
  if (positions_.count(id)) fail(Errc::data, "duplicate index id '" + id + "'");
  positions_.emplace(id, entries_.size());
  entries_.push_back({std::move(id), std::move(vector)});
}

const EmbeddingIndex::Entry* EmbeddingIndex::find(std::string_view id) const {
  auto it = positions_.find(std::string(id));
  return it == positions_.end() ? nullptr : &entries_[it->second];
}

EmbeddingIndex EmbeddingIndex::filtered(const std::function<bool(std::string_view)>& keep) const {
  EmbeddingIndex out(dim_);
  for (const auto& e : entries_) {
    if (keep(e.id)) out.add(e.id, e.vector);
  }
  return out;
}

EmbeddingIndex build_index(const std::vector<DemonstrationCandidate>& candidates, const InferenceClient& client) {
  if (candidates.empty()) fail(Errc::invalid_argument, "build_index: no candidates");
  std::vector<EmbeddingVector> vectors(candidates.size());
  parallel_for(candidates.size(), client.max_in_flight(), [&](std::size_t i) {
    try {
      vectors[i] = client.embed_image(candidates[i].image.bytes());
    } catch (const Error& e) {
      throw Error(e.code(), "embedding candidate '" + candidates[i].id + "': " + e.what());
    }
  });
  EmbeddingIndex index(vectors.front().dim());
  for (std::size_t i = 0; i < candidates.size(); ++i) index.add(candidates[i].id, std::move(vectors[i]));
  return index;
}

// ---------------------------------------------------------------------------
// Binary format

namespace {

constexpr char kMagic[4] = {'V', 'I', 'C', 'L'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((u >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T le(const char* what) {
    need(sizeof(T), what);
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      v |= static_cast<std::make_unsigned_t<T>>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) fail(Errc::truncated, std::string("index file truncated while reading ") + what);
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_index(const EmbeddingIndex& index) {
  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(index.dim()));
  put_le<std::uint64_t>(out, index.size());
  for (const auto& e : index.entries()) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e.id.size()));
    out += e.id;
    for (float v : e.vector.values()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

EmbeddingIndex decode_index(std::string_view bytes) {
  if (bytes.size() < sizeof kMagic) fail(Errc::truncated, "index file truncated while reading magic");
  if (std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) fail(Errc::bad_magic, "index file has bad magic bytes");
  Reader r(bytes.substr(sizeof kMagic));
  const auto version = r.le<std::uint32_t>("version");
  if (version != kVersion) fail(Errc::bad_version, "unsupported index version " + std::to_string(version));
  const auto dim = r.le<std::uint32_t>("dimension");
  const auto count = r.le<std::uint64_t>("entry count");
  if (dim == 0) fail(Errc::data, "index dimension is zero");
  EmbeddingIndex index(dim);
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto id_len = r.le<std::uint32_t>("id length");
    std::string id(r.take(id_len, "id"));
    std::vector<float> values(dim);
    for (auto& v : values) v = std::bit_cast<float>(r.le<std::uint32_t>("vector"));
    try {
      index.add(std::move(id), EmbeddingVector(std::move(values)));
    } catch (const Error& e) {
      fail(Errc::data, "index entry " + std::to_string(n) + ": " + e.what());
    }
  }
  if (r.remaining() != 0) fail(Errc::data, "index file has " + std::to_string(r.remaining()) + " trailing bytes");
  return index;
}

void write_index(const EmbeddingIndex& index, const std::filesystem::path& path) {
  const auto bytes = encode_index(index);
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::data, "cannot write index file '" + path.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::data, "failed writing index file '" + path.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

EmbeddingIndex read_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::data, "cannot open index file '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_index(ss.str());
}

}  // namespace vicl
