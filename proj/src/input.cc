#include "statefuzz/input.h"

#include <algorithm>
#include <fstream>
#include <iterator>

namespace statefuzz {
namespace {

constexpr uint8_t kMagic[4] = {'S', 'A', 'F', 'L'};
constexpr uint8_t kVersion = 1;

void PutU32(Bytes& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t GetU32(ByteView data, size_t& pos) {
  if (data.size() - pos < 4) throw SaflFormatError("truncated u32", pos);
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data[pos + i]) << (8 * i);
  pos += 4;
  return v;
}

}  // namespace

size_t FuzzInput::total_bytes() const {
  size_t n = 0;
  for (const auto& m : messages) n += m.size();
  return n;
}

Bytes EncodeSafl(const FuzzInput& input) {
  Bytes out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  PutU32(out, static_cast<uint32_t>(input.messages.size()));
  for (const auto& m : input.messages) {
    PutU32(out, static_cast<uint32_t>(m.size()));
    out.insert(out.end(), m.begin(), m.end());
  }
  return out;
}

FuzzInput DecodeSafl(ByteView data) {
  if (data.size() < 4) throw SaflFormatError("truncated magic", data.size());
  if (!std::equal(std::begin(kMagic), std::end(kMagic), data.begin())) {
    throw SaflFormatError("bad magic", 0);
  }
  size_t pos = 4;
  if (pos >= data.size()) throw SaflFormatError("truncated version", pos);
  if (data[pos] != kVersion) throw SaflFormatError("unsupported version", pos);
  ++pos;
  const uint32_t count = GetU32(data, pos);
  FuzzInput input;
  for (uint32_t i = 0; i < count; ++i) {
    const size_t len_pos = pos;
    const uint32_t len = GetU32(data, pos);
    if (data.size() - pos < len) throw SaflFormatError("truncated message body", len_pos);
    input.messages.emplace_back(data.begin() + pos, data.begin() + pos + len);
    pos += len;
  }
  if (pos != data.size()) throw SaflFormatError("trailing bytes", pos);
  return input;
}

FuzzInput ReadSaflFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return DecodeSafl(data);
}

void WriteSaflFile(const std::filesystem::path& path, const FuzzInput& input) {
  const Bytes data = EncodeSafl(input);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
}

std::vector<FuzzInput> ReadSeedDirectory(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw std::runtime_error("seed directory not found: " + dir.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".safl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<FuzzInput> seeds;
  for (const auto& f : files) seeds.push_back(ReadSaflFile(f));
  return seeds;
}

}  // namespace statefuzz
