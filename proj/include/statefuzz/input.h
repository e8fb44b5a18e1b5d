#pragma once

// Fuzz inputs (one session's ordered request messages) and the .safl file
// format:
//   "SAFL" | version u8 = 1 | message_count u32 LE | { length u32 LE | bytes }*

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "statefuzz/bytes.h"

namespace statefuzz {

inline constexpr size_t kMaxInputBytes = 1 << 20;

struct Provenance {
  int64_t parent_id = -1;
  int64_t state_targeted = -1;
  std::vector<std::string> operators_applied;
};

struct FuzzInput {
  std::vector<Bytes> messages;
  Provenance provenance;

  size_t total_bytes() const;
  bool operator==(const FuzzInput& o) const { return messages == o.messages; }
};

class SaflFormatError : public std::runtime_error {
 public:
  SaflFormatError(const std::string& what, size_t offset)
      : std::runtime_error(what + " at offset " + std::to_string(offset)), offset_(offset) {}
  size_t offset() const { return offset_; }

 private:
  size_t offset_;
};

Bytes EncodeSafl(const FuzzInput& input);
// Throws SaflFormatError naming the offending offset.
FuzzInput DecodeSafl(ByteView data);

FuzzInput ReadSaflFile(const std::filesystem::path& path);
void WriteSaflFile(const std::filesystem::path& path, const FuzzInput& input);

// Reads every *.safl file of a directory in lexicographic filename order.
std::vector<FuzzInput> ReadSeedDirectory(const std::filesystem::path& dir);

}  // namespace statefuzz
