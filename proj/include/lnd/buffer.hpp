#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lnd/errors.hpp"
#include "lnd/io.hpp"
#include "lnd/matrix.hpp"
#include "lnd/rng.hpp"

namespace lnd {

using json = nlohmann::ordered_json;

// Where a buffer's transitions came from.
enum class Source { kExpert, kAnchor, kImitator };

inline std::string source_name(Source s) {
  switch (s) {
    case Source::kExpert: return "expert";
    case Source::kAnchor: return "anchor";
    case Source::kImitator: return "imitator";
  }
  throw ConfigError("source_name: unknown source");
}

inline Source source_from_name(const std::string& s) {
  if (s == "expert") return Source::kExpert;
  if (s == "anchor") return Source::kAnchor;
  if (s == "imitator") return Source::kImitator;
  throw ConfigError("source_from_name: unknown source '" + s + "'");
}

struct TransitionRecord {
  std::vector<double> s;
  std::vector<double> a;
  std::optional<double> r;  // reward of the source rollout, when meaningful
  std::vector<double> s_next;
  int episode = 0;
  int t = 0;  // within-episode step index, 0 <= t < horizon
};

// Ordered collection of transitions plus the metadata needed to interpret
// them. Records are stored episode-contiguous in time order.
struct DemoBuffer {
  int state_dim = 0;
  int action_dim = 0;
  int horizon = 0;
  Source source = Source::kExpert;
  bool noisy = false;
  std::string noise_spec;  // path of the noise description, empty if none
  std::vector<TransitionRecord> records;

  int size() const { return static_cast<int>(records.size()); }

  void validate() const {
    if (state_dim <= 0 || action_dim <= 0 || horizon <= 0)
      throw InputError("DemoBuffer: non-positive dims or horizon");
    for (std::size_t i = 0; i < records.size(); ++i) {
      const TransitionRecord& rec = records[i];
      if (static_cast<int>(rec.s.size()) != state_dim ||
          static_cast<int>(rec.s_next.size()) != state_dim)
        throw ShapeError("DemoBuffer: record " + std::to_string(i) +
                         " state dim mismatch");
      if (static_cast<int>(rec.a.size()) != action_dim)
        throw ShapeError("DemoBuffer: record " + std::to_string(i) +
                         " action dim mismatch");
      if (rec.t < 0 || rec.t >= horizon)
        throw InputError("DemoBuffer: record " + std::to_string(i) +
                         " step index out of [0, horizon)");
    }
  }
};

// ---------------------------------------------------------------------------
// JSON-lines serialization: one header object, then one object per record.

inline json buffer_header_json(const DemoBuffer& b) {
  json h;
  h["kind"] = "demo-corpus";
  h["version"] = 1;
  h["state_dim"] = b.state_dim;
  h["action_dim"] = b.action_dim;
  h["horizon"] = b.horizon;
  h["source"] = source_name(b.source);
  h["noisy"] = b.noisy;
  if (b.noise_spec.empty())
    h["noise_spec"] = nullptr;
  else
    h["noise_spec"] = b.noise_spec;
  return h;
}

inline std::string buffer_to_jsonl(const DemoBuffer& b) {
  b.validate();
  std::ostringstream out;
  out << buffer_header_json(b).dump() << '\n';
  for (const TransitionRecord& rec : b.records) {
    json j;
    j["episode"] = rec.episode;
    j["t"] = rec.t;
    j["s"] = rec.s;
    j["a"] = rec.a;
    if (rec.r)
      j["r"] = *rec.r;
    else
      j["r"] = nullptr;
    j["s_next"] = rec.s_next;
    out << j.dump() << '\n';
  }
  return out.str();
}

inline void save_buffer(const std::string& path, const DemoBuffer& b) {
  atomic_write_text(path, buffer_to_jsonl(b));
}

inline DemoBuffer buffer_from_jsonl(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  DemoBuffer b;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("corpus: ") + e.what(), lineno);
    }
    try {
      if (!have_header) {
        if (j.value("kind", "") != "demo-corpus")
          throw ParseError("corpus: first line must be a demo-corpus header",
                           lineno);
        b.state_dim = j.at("state_dim").get<int>();
        b.action_dim = j.at("action_dim").get<int>();
        b.horizon = j.at("horizon").get<int>();
        b.source = source_from_name(j.at("source").get<std::string>());
        b.noisy = j.at("noisy").get<bool>();
        if (j.contains("noise_spec") && !j.at("noise_spec").is_null())
          b.noise_spec = j.at("noise_spec").get<std::string>();
        have_header = true;
        continue;
      }
      TransitionRecord rec;
      rec.episode = j.at("episode").get<int>();
      rec.t = j.at("t").get<int>();
      rec.s = j.at("s").get<std::vector<double>>();
      rec.a = j.at("a").get<std::vector<double>>();
      if (j.contains("r") && !j.at("r").is_null())
        rec.r = j.at("r").get<double>();
      rec.s_next = j.at("s_next").get<std::vector<double>>();
      b.records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("corpus: ") + e.what(), lineno);
    }
  }
  if (!have_header) throw ParseError("corpus: missing header line");
  b.validate();
  return b;
}

inline DemoBuffer load_buffer(const std::string& path) {
  return buffer_from_jsonl(read_text(path));
}

// ---------------------------------------------------------------------------
// Anchor construction by shuffling: permute whole records, then re-chain
// s_next so each record's successor state is the state of the record that now
// follows it (cyclically, so the last record chains to the first). Episode
// ids and step indices are reassigned to keep records episode-contiguous.

inline DemoBuffer anchor_shuffle(const DemoBuffer& in, Rng& rng) {
  in.validate();
  int n = in.size();
  if (n == 0) throw InputError("anchor_shuffle: empty buffer");
  std::vector<int> perm = rng.permutation(n);
  DemoBuffer out;
  out.state_dim = in.state_dim;
  out.action_dim = in.action_dim;
  out.horizon = in.horizon;
  out.source = Source::kAnchor;
  out.noisy = in.noisy;
  out.noise_spec = in.noise_spec;
  out.records.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const TransitionRecord& src =
        in.records[static_cast<std::size_t>(perm[static_cast<std::size_t>(k)])];
    const TransitionRecord& succ = in.records[static_cast<std::size_t>(
        perm[static_cast<std::size_t>((k + 1) % n)])];
    TransitionRecord& dst = out.records[static_cast<std::size_t>(k)];
    dst.s = src.s;
    dst.a = src.a;
    dst.r = src.r;
    dst.s_next = succ.s;
    dst.episode = k / in.horizon;
    dst.t = k % in.horizon;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batch sampling.

// n indices drawn uniformly without replacement from [0, size); n == size
// returns a full permutation.
inline std::vector<int> sample_indices(int size, int n, Rng& rng) {
  if (size <= 0) throw SamplingError("sample_indices: empty pool");
  if (n <= 0) throw SamplingError("sample_indices: non-positive batch");
  if (n > size)
    throw SamplingError("sample_indices: batch " + std::to_string(n) +
                        " exceeds pool " + std::to_string(size));
  std::vector<int> pool(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) pool[static_cast<std::size_t>(i)] = i;
  for (int i = 0; i < n; ++i) {
    int j = i + rng.uniform_int(size - i);
    std::swap(pool[static_cast<std::size_t>(i)],
              pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(n));
  return pool;
}

// Index sets for one training step: expert and anchor share one index set
// (records at matching indices stay aligned), the imitator draw is
// independent.
struct TripleIndices {
  std::vector<int> shared;    // into expert and anchor buffers
  std::vector<int> imitator;  // into the imitator buffer
};

inline TripleIndices sample_triple(const DemoBuffer& expert,
                                   const DemoBuffer& anchor,
                                   const DemoBuffer& imitator, int n,
                                   Rng& rng) {
  int aligned = std::min(expert.size(), anchor.size());
  TripleIndices out;
  out.shared = sample_indices(aligned, n, rng);
  out.imitator = sample_indices(imitator.size(), n, rng);
  return out;
}

inline Matrix gather_states(const DemoBuffer& b, const std::vector<int>& idx) {
  Matrix m(static_cast<int>(idx.size()), b.state_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const TransitionRecord& rec = b.records.at(static_cast<std::size_t>(idx[i]));
    std::copy(rec.s.begin(), rec.s.end(), m[static_cast<int>(i)]);
  }
  return m;
}

inline Matrix gather_next_states(const DemoBuffer& b,
                                 const std::vector<int>& idx) {
  Matrix m(static_cast<int>(idx.size()), b.state_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const TransitionRecord& rec = b.records.at(static_cast<std::size_t>(idx[i]));
    std::copy(rec.s_next.begin(), rec.s_next.end(), m[static_cast<int>(i)]);
  }
  return m;
}

inline Matrix gather_actions(const DemoBuffer& b, const std::vector<int>& idx) {
  Matrix m(static_cast<int>(idx.size()), b.action_dim);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const TransitionRecord& rec = b.records.at(static_cast<std::size_t>(idx[i]));
    std::copy(rec.a.begin(), rec.a.end(), m[static_cast<int>(i)]);
  }
  return m;
}

}  // namespace lnd
