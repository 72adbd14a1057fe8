#include "echo/snapshot.hpp"

#include <bit>
#include <cstring>

#include "echo/core/text.hpp"

namespace echo::snapshot {

namespace {

constexpr std::string_view kMagic = "ECHOSNAP";

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u64(s.size());
    out_.append(s);
  }
  void vec(const std::vector<double>& v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  std::string& bytes() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u64();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::vector<double> vec() {
    const auto n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = in_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > in_.size() - pos_) throw SnapshotError("snapshot truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode(const Snapshot& s) {
  Writer p;
  p.u64(s.models.size());
  for (const auto& m : s.models) {
    p.str(m.feature_id);
    p.u8(static_cast<std::uint8_t>(m.kind));
    p.u64(m.input_dim);
    p.u64(m.output_dim);
    p.u64(m.update_count);
    p.f64(m.learning_rate);
    p.vec(m.weights);
    p.vec(m.bias);
    p.u64(m.label_bank.size());
    for (const auto& b : m.label_bank) {
      p.str(b.text);
      p.vec(b.embedding);
    }
  }
  const auto& sel = s.selector;
  p.u64(sel.feature_ids.size());
  for (std::size_t i = 0; i < sel.feature_ids.size(); ++i) {
    p.str(sel.feature_ids[i]);
    for (double w : sel.weights[i]) p.f64(w);
    p.f64(sel.alpha[i]);
    p.f64(sel.beta[i]);
  }
  p.u64(sel.k);
  p.u8(static_cast<std::uint8_t>(sel.mode));
  p.f64(sel.learning_rate);

  Writer out;
  out.bytes().append(kMagic);
  out.u32(kVersion);
  out.u64(p.bytes().size());
  out.bytes().append(p.bytes());
  out.u64(core::fnv1a(p.bytes()));
  return std::move(out.bytes());
}

Snapshot decode(std::string_view bytes) {
  Reader head(bytes);
  if (head.take(std::min(bytes.size(), kMagic.size())) != kMagic) throw SnapshotError("not a snapshot");
  if (const auto v = head.u32(); v != kVersion)
    throw SnapshotError("unsupported snapshot version " + std::to_string(v));
  const auto size = head.u64();
  const auto payload = head.take(size);
  if (head.u64() != core::fnv1a(payload)) throw SnapshotError("snapshot checksum mismatch");
  if (!head.done()) throw SnapshotError("trailing bytes after snapshot");

  Reader r(payload);
  Snapshot s;
  const auto n_models = r.u64();
  for (std::uint64_t i = 0; i < n_models; ++i) {
    features::FeatureModelParams m;
    m.feature_id = r.str();
    const auto kind = r.u8();
    if (kind > static_cast<std::uint8_t>(core::FeatureKind::free_text)) throw SnapshotError("bad feature kind");
    m.kind = static_cast<core::FeatureKind>(kind);
    m.input_dim = r.u64();
    m.output_dim = r.u64();
    m.update_count = r.u64();
    m.learning_rate = r.f64();
    m.weights = r.vec();
    m.bias = r.vec();
    const auto bank = r.u64();
    for (std::uint64_t b = 0; b < bank; ++b) {
      core::FreeText t;
      t.text = r.str();
      t.embedding = r.vec();
      m.label_bank.push_back(std::move(t));
    }
    s.models.push_back(std::move(m));
  }
  auto& sel = s.selector;
  const auto n = r.u64();
  for (std::uint64_t i = 0; i < n; ++i) {
    sel.feature_ids.push_back(r.str());
    selector::MetaFeatures w{};
    for (double& x : w) x = r.f64();
    sel.weights.push_back(w);
    sel.alpha.push_back(r.f64());
    sel.beta.push_back(r.f64());
  }
  sel.k = r.u64();
  const auto mode = r.u8();
  if (mode > static_cast<std::uint8_t>(selector::Mode::select_models)) throw SnapshotError("bad selector mode");
  sel.mode = static_cast<selector::Mode>(mode);
  sel.learning_rate = r.f64();
  if (!r.done()) throw SnapshotError("trailing bytes in payload");
  return s;
}

}  // namespace echo::snapshot
