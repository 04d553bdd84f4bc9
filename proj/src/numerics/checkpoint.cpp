#include "wsgic/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "wsgic/errors.hpp"

namespace wsgic {

namespace {

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  bool done() const { return pos_ == bytes_.size(); }

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  float f32() {
    need(4);
    std::uint32_t bits = 0;
    for (int i = 0; i < 4; ++i) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return std::bit_cast<float>(bits);
  }

  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw IoError("checkpoint truncated");
  }

  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_records(const std::filesystem::path& path, std::vector<TensorRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const TensorRecord& a, const TensorRecord& b) { return a.name < b.name; });
  std::string out(kCheckpointMagic);
  for (const auto& r : records) {
    if (shape_numel(r.shape) != r.values.size()) {
      throw ShapeMismatch("record " + r.name + " has inconsistent shape");
    }
    put_u64(out, r.name.size());
    out += r.name;
    put_u64(out, r.shape.size());
    for (auto e : r.shape) put_u64(out, e);
    for (float v : r.values) put_f32(out, v);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("write failed: " + path.string());
}

std::vector<TensorRecord> read_records(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingCheckpoint("cannot open checkpoint " + path.string());
  Reader in(std::string(std::istreambuf_iterator<char>(f), {}));
  const std::string magic(kCheckpointMagic);
  if (in.str(magic.size()) != magic) throw IoError("bad checkpoint magic in " + path.string());
  std::vector<TensorRecord> records;
  while (!in.done()) {
    TensorRecord r;
    r.name = in.str(in.u64());
    const auto rank = in.u64();
    if (rank > 8) throw IoError("implausible rank in checkpoint record " + r.name);
    for (std::uint64_t i = 0; i < rank; ++i) r.shape.push_back(in.u64());
    const auto n = shape_numel(r.shape);
    r.values.reserve(n);
    for (std::size_t i = 0; i < n; ++i) r.values.push_back(in.f32());
    records.push_back(std::move(r));
  }
  return records;
}

template <typename T>
void save_parameters(const ParameterStore<T>& params, const std::filesystem::path& path) {
  std::vector<TensorRecord> records;
  for (const auto& [name, p] : params) {
    records.push_back({name, p.tensor.shape(),
                       std::vector<float>(p.tensor.data().begin(), p.tensor.data().end())});
  }
  write_records(path, std::move(records));
}

template <typename T>
void load_parameters(ParameterStore<T>& params, const std::filesystem::path& path) {
  auto records = read_records(path);
  if (records.size() != params.size()) {
    throw ShapeMismatch("checkpoint has " + std::to_string(records.size()) +
                        " parameters, model has " + std::to_string(params.size()));
  }
  for (const auto& r : records) {
    if (!params.contains(r.name)) throw ShapeMismatch("checkpoint parameter not in model: " + r.name);
    auto& p = params.at(r.name);
    if (p.tensor.shape() != r.shape) {
      throw ShapeMismatch("checkpoint shape " + shape_str(r.shape) + " for " + r.name +
                          ", model has " + shape_str(p.tensor.shape()));
    }
    auto dst = p.tensor.mutable_data();
    std::transform(r.values.begin(), r.values.end(), dst.begin(),
                   [](float v) { return static_cast<T>(v); });
  }
}

template void save_parameters<float>(const ParameterStore<float>&, const std::filesystem::path&);
template void save_parameters<double>(const ParameterStore<double>&, const std::filesystem::path&);
template void load_parameters<float>(ParameterStore<float>&, const std::filesystem::path&);
template void load_parameters<double>(ParameterStore<double>&, const std::filesystem::path&);

}  // namespace wsgic
