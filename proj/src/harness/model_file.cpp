#include "geode/harness/model_file.hpp"

#include <bit>
#include <cstring>
#include <deque>
#include <fstream>
#include <iterator>
#include <sstream>

namespace geode {

namespace {

constexpr const char* kMagic = "GEODE-MODEL\n";
constexpr int kVersion = 1;

void put_u64(std::string& out, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

std::uint64_t get_u64(const std::string& in, std::size_t pos) {
  std::uint64_t v = 0;
  for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  return v;
}

class BlockWriter {
 public:
  std::vector<double>& add(const std::string& name, Index rows, Index cols) {
    blocks_.push_back({{"name", name}, {"rows", rows}, {"cols", cols}});
    data_.emplace_back();
    data_.back().reserve(static_cast<std::size_t>(rows * cols));
    return data_.back();
  }

  const nlohmann::json& list() const { return blocks_; }

  void write_payload(std::string& out) const {
    for (std::size_t b = 0; b < data_.size(); ++b) {
      const auto expected = blocks_[b]["rows"].get<std::size_t>() * blocks_[b]["cols"].get<std::size_t>();
      if (data_[b].size() != expected) {
        throw Error(ErrorKind::FormatError, "block " + blocks_[b]["name"].get<std::string>() + " has the wrong size");
      }
      for (double v : data_[b]) put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
  }

 private:
  nlohmann::json blocks_ = nlohmann::json::array();
  std::deque<std::vector<double>> data_;
};

class BlockReader {
 public:
  BlockReader(const std::string& bytes, std::size_t start, const nlohmann::json& list)
      : bytes_(bytes), pos_(start), list_(list) {}

  std::vector<double> next(const std::string& name, Index rows, Index cols) {
    if (index_ >= list_.size()) throw Error(ErrorKind::FormatError, "missing block " + name);
    const nlohmann::json& b = list_[index_++];
    if (b.at("name").get<std::string>() != name || b.at("rows").get<Index>() != rows ||
        b.at("cols").get<Index>() != cols) {
      throw Error(ErrorKind::FormatError, "unexpected block layout at " + name);
    }
    const auto count = static_cast<std::size_t>(rows * cols);
    if (pos_ + 8 * count > bytes_.size()) throw Error(ErrorKind::FormatError, "truncated block " + name);
    std::vector<double> out(count);
    for (std::size_t q = 0; q < count; ++q) out[q] = std::bit_cast<double>(get_u64(bytes_, pos_ + 8 * q));
    pos_ += 8 * count;
    return out;
  }

  void finish() const {
    if (index_ != list_.size() || pos_ != bytes_.size()) throw Error(ErrorKind::FormatError, "trailing data in model file");
  }

 private:
  const std::string& bytes_;
  std::size_t pos_;
  const nlohmann::json& list_;
  std::size_t index_ = 0;
};

int to_int(double v) { return static_cast<int>(v); }

}  // namespace

std::string serialize_model(const FittedModel& model, const RunConfig& config) {
  const ClusterTree& tree = model.tree;
  const MultiscaleDictionary& dict = model.dict;
  const Index D = dict.ambient_dim();
  const int d = dict.dim();
  const int slots = tree.slot_count();
  const Index n = tree.sample_size();
  const std::vector<int>& nodes = tree.nodes();
  const auto node_count = static_cast<Index>(nodes.size());
  const auto& snaps = model.draws.snapshots;
  const auto& adapt = model.draws.adaptation_log;
  const auto R = static_cast<Index>(snaps.size());
  const auto A = static_cast<Index>(adapt.size());

  BlockWriter w;
  auto& offsets = w.add("tree.offsets", 1, slots + 1);
  Index total = 0;
  offsets.push_back(0.0);
  for (int k = 0; k < slots; ++k) {
    total += static_cast<Index>(tree.members(k).size());
    offsets.push_back(static_cast<double>(total));
  }
  auto& members = w.add("tree.members", 1, total);
  for (int k = 0; k < slots; ++k) {
    for (Index i : tree.members(k)) members.push_back(static_cast<double>(i));
  }

  auto& mu = w.add("dict.mu", node_count, D);
  auto& basis = w.add("dict.basis", node_count, D * d);
  auto& sv = w.add("dict.singular", node_count, d);
  for (int k : nodes) {
    const NodeDictionary& nd = dict.node(k);
    mu.insert(mu.end(), nd.mu.data(), nd.mu.data() + D);
    basis.insert(basis.end(), nd.basis.data(), nd.basis.data() + D * d);
    sv.insert(sv.end(), nd.singular_values.data(), nd.singular_values.data() + d);
  }

  auto& iter = w.add("draws.iter", R, 1);
  auto& membership = w.add("draws.membership", R, n);
  auto& S = w.add("draws.S", R, slots);
  auto& Rr = w.add("draws.R", R, slots);
  auto& pi = w.add("draws.pi", R, slots);
  auto& u = w.add("draws.u", R, node_count * d);
  auto& tau = w.add("draws.tau", R, node_count * d);
  auto& retained = w.add("draws.retained", R, node_count * d);
  auto& last = w.add("draws.last_ratio", R, node_count * d);
  auto& sigma2 = w.add("draws.sigma2", R, tree.depth() + 1);
  for (const Snapshot& s : snaps) {
    iter.push_back(s.iter);
    for (int k : s.membership) membership.push_back(k);
    S.insert(S.end(), s.stick.S.data(), s.stick.S.data() + slots);
    Rr.insert(Rr.end(), s.stick.R.data(), s.stick.R.data() + slots);
    pi.insert(pi.end(), s.stick.pi.data(), s.stick.pi.data() + slots);
    for (int k : nodes) {
      const NodeParams& p = s.nodes[static_cast<std::size_t>(k)];
      u.insert(u.end(), p.u.data(), p.u.data() + d);
      tau.insert(tau.end(), p.tau.data(), p.tau.data() + d);
      for (char c : p.retained) retained.push_back(c ? 1.0 : 0.0);
      last.insert(last.end(), p.last_ratio.data(), p.last_ratio.data() + d);
    }
    sigma2.insert(sigma2.end(), s.scales.sigma2.data(), s.scales.sigma2.data() + tree.depth() + 1);
  }

  auto& meta = w.add("adapt.meta", A, 5);
  auto& incl = w.add("adapt.inclusion", A, d);
  for (const AdaptationRecord& a : adapt) {
    meta.insert(meta.end(), {static_cast<double>(a.iter), a.collected ? 1.0 : 0.0, static_cast<double>(a.deleted),
                             static_cast<double>(a.reinserted), static_cast<double>(a.observations)});
    for (Index c : a.inclusion) incl.push_back(static_cast<double>(c));
  }

  nlohmann::json header{{"format", "geode-model"},
                        {"version", kVersion},
                        {"D", D},
                        {"d", d},
                        {"depth", tree.depth()},
                        {"slots", slots},
                        {"n", n},
                        {"seed", config.hyper.seed},
                        {"config", config_to_json(config)},
                        {"nodes", nodes},
                        {"draws", R},
                        {"adaptation_records", A},
                        {"blocks", w.list()}};
  const std::string text = header.dump();
  std::string out = kMagic;
  put_u64(out, text.size());
  out += text;
  w.write_payload(out);
  return out;
}

ModelBundle deserialize_model(const std::string& bytes) {
  const std::size_t magic_len = std::strlen(kMagic);
  if (bytes.size() < magic_len + 8 || bytes.compare(0, magic_len, kMagic) != 0) {
    throw Error(ErrorKind::FormatError, "not a model file");
  }
  const std::uint64_t header_len = get_u64(bytes, magic_len);
  const std::size_t start = magic_len + 8;
  if (header_len > bytes.size() - start) throw Error(ErrorKind::FormatError, "truncated model header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(start, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad model header: ") + e.what());
  }

  ModelBundle out;
  try {
    if (header.at("format") != "geode-model") throw Error(ErrorKind::FormatError, "not a model file");
    if (header.at("version").get<int>() != kVersion) {
      throw Error(ErrorKind::FormatError, "unsupported model version " + header.at("version").dump());
    }
    out.config = config_from_json(header.at("config"));
    const auto D = header.at("D").get<Index>();
    const int d = header.at("d").get<int>();
    const int depth = header.at("depth").get<int>();
    const int slots = header.at("slots").get<int>();
    const auto n = header.at("n").get<Index>();
    const auto nodes = header.at("nodes").get<std::vector<int>>();
    const auto R = header.at("draws").get<Index>();
    const auto A = header.at("adaptation_records").get<Index>();
    const auto node_count = static_cast<Index>(nodes.size());
    if (slots != slot_count_for_depth(depth) && !(slots == 1 && depth == 0)) {
      throw Error(ErrorKind::FormatError, "slot count does not match depth");
    }

    BlockReader r(bytes, start + header_len, header.at("blocks"));
    const std::vector<double> offsets = r.next("tree.offsets", 1, slots + 1);
    const std::vector<double> members = r.next("tree.members", 1, static_cast<Index>(offsets.back()));
    std::vector<std::vector<Index>> cells(static_cast<std::size_t>(slots));
    for (int k = 0; k < slots; ++k) {
      for (auto q = static_cast<std::size_t>(offsets[static_cast<std::size_t>(k)]);
           q < static_cast<std::size_t>(offsets[static_cast<std::size_t>(k) + 1]); ++q) {
        cells[static_cast<std::size_t>(k)].push_back(static_cast<Index>(members[q]));
      }
    }
    out.model.tree = ClusterTree::from_cells(n, std::move(cells));
    if (out.model.tree.nodes() != nodes) throw Error(ErrorKind::FormatError, "node list disagrees with tree cells");

    const std::vector<double> mu = r.next("dict.mu", node_count, D);
    const std::vector<double> basis = r.next("dict.basis", node_count, D * d);
    const std::vector<double> sv = r.next("dict.singular", node_count, d);
    std::vector<NodeDictionary> dn(static_cast<std::size_t>(slots));
    for (Index q = 0; q < node_count; ++q) {
      NodeDictionary& nd = dn[static_cast<std::size_t>(nodes[static_cast<std::size_t>(q)])];
      nd.mu = Eigen::Map<const Vector>(mu.data() + q * D, D);
      nd.basis = Eigen::Map<const Matrix>(basis.data() + q * D * d, D, d);
      nd.singular_values = Eigen::Map<const Vector>(sv.data() + q * d, d);
    }
    out.model.dict = MultiscaleDictionary(D, d, std::move(dn));

    const std::vector<double> iter = r.next("draws.iter", R, 1);
    const std::vector<double> membership = r.next("draws.membership", R, n);
    const std::vector<double> S = r.next("draws.S", R, slots);
    const std::vector<double> Rr = r.next("draws.R", R, slots);
    const std::vector<double> pi = r.next("draws.pi", R, slots);
    const std::vector<double> u = r.next("draws.u", R, node_count * d);
    const std::vector<double> tau = r.next("draws.tau", R, node_count * d);
    const std::vector<double> retained = r.next("draws.retained", R, node_count * d);
    const std::vector<double> last = r.next("draws.last_ratio", R, node_count * d);
    const std::vector<double> sigma2 = r.next("draws.sigma2", R, depth + 1);
    for (Index t = 0; t < R; ++t) {
      Snapshot s;
      s.iter = to_int(iter[static_cast<std::size_t>(t)]);
      s.membership.resize(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) {
        s.membership[static_cast<std::size_t>(i)] = to_int(membership[static_cast<std::size_t>(t * n + i)]);
      }
      s.stick.S = Eigen::Map<const Vector>(S.data() + t * slots, slots);
      s.stick.R = Eigen::Map<const Vector>(Rr.data() + t * slots, slots);
      s.stick.pi = Eigen::Map<const Vector>(pi.data() + t * slots, slots);
      s.nodes.assign(static_cast<std::size_t>(slots), NodeParams{});
      for (Index q = 0; q < node_count; ++q) {
        NodeParams& p = s.nodes[static_cast<std::size_t>(nodes[static_cast<std::size_t>(q)])];
        const Index off = (t * node_count + q) * d;
        p.u = Eigen::Map<const Vector>(u.data() + off, d);
        p.tau = Eigen::Map<const Vector>(tau.data() + off, d);
        p.last_ratio = Eigen::Map<const Vector>(last.data() + off, d);
        p.retained.resize(static_cast<std::size_t>(d));
        for (int m = 0; m < d; ++m) p.retained[static_cast<std::size_t>(m)] = retained[static_cast<std::size_t>(off + m)] != 0.0;
      }
      s.scales.sigma2 = Eigen::Map<const Vector>(sigma2.data() + t * (depth + 1), depth + 1);
      out.model.draws.snapshots.push_back(std::move(s));
    }

    const std::vector<double> meta = r.next("adapt.meta", A, 5);
    const std::vector<double> incl = r.next("adapt.inclusion", A, d);
    for (Index a = 0; a < A; ++a) {
      AdaptationRecord rec;
      const double* m = meta.data() + a * 5;
      rec.iter = to_int(m[0]);
      rec.collected = m[1] != 0.0;
      rec.deleted = to_int(m[2]);
      rec.reinserted = to_int(m[3]);
      rec.observations = static_cast<Index>(m[4]);
      for (int j = 0; j < d; ++j) rec.inclusion.push_back(static_cast<Index>(incl[static_cast<std::size_t>(a * d + j)]));
      out.model.draws.adaptation_log.push_back(std::move(rec));
    }
    r.finish();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("bad model header: ") + e.what());
  }
  out.model.hyper = out.config.hyper;
  return out;
}

void save_model(const std::string& path, const FittedModel& model, const RunConfig& config) {
  const std::string bytes = serialize_model(model, config);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::IoError, "write failed for " + path);
}

ModelBundle load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace geode
