#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "echo/features.hpp"
#include "echo/selector.hpp"

namespace echo::snapshot {

/// Container layout (all integers little-endian):
///   "ECHOSNAP"  u32 version  u64 payload_size  payload  u64 fnv1a(payload)
inline constexpr std::uint32_t kVersion = 1;

class SnapshotError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Snapshot {
  std::vector<features::FeatureModelParams> models;
  selector::SelectorParams selector;
  bool operator==(const Snapshot&) const = default;
};

std::string encode(const Snapshot& s);
/// Throws SnapshotError on a bad magic, unknown version, truncation or a
/// checksum mismatch.
Snapshot decode(std::string_view bytes);

}  // namespace echo::snapshot
