#include "fsdnet/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fsdnet::net {

namespace {

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}

  template <typename U>
  void pod(U value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(U));
  }
  void bytes(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, const std::filesystem::path& path) : in_(in), path_(path) {}

  template <typename U>
  U pod() {
    U value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(U));
    if (!in_) fail("truncated file");
    return value;
  }
  std::string bytes() {
    const auto n = pod<std::uint32_t>();
    std::string s(n, '\0');
    in_.read(s.data(), n);
    if (!in_) fail("truncated file");
    return s;
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw IngestionError("checkpoint " + path_.string() + ": " + what);
  }

 private:
  std::ifstream& in_;
  const std::filesystem::path& path_;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params,
                     const nlohmann::json& metadata) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IngestionError("cannot write checkpoint " + path.string());
  Writer w(out);
  const std::string config = params.config().to_json().dump();
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  w.pod(kCheckpointVersion);
  w.pod(fnv1a64(config));
  w.bytes(config);
  w.bytes(metadata.dump());
  w.pod(static_cast<std::uint32_t>(params.tensors().size()));
  for (const auto& t : params.tensors()) {
    w.bytes(t.name);
    w.pod(std::uint32_t{2});
    w.pod(static_cast<std::uint32_t>(t.value.rows()));
    w.pod(static_cast<std::uint32_t>(t.value.cols()));
    for (Index i = 0; i < t.value.rows(); ++i) {
      for (Index j = 0; j < t.value.cols(); ++j) w.pod(t.value(i, j));
    }
  }
  if (!out) throw IngestionError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open checkpoint " + path.string());
  Reader r(in, path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) r.fail("bad magic");
  if (r.pod<std::uint32_t>() != kCheckpointVersion) r.fail("unsupported version");
  const auto digest = r.pod<std::uint64_t>();
  const std::string config_text = r.bytes();
  if (fnv1a64(config_text) != digest) r.fail("config digest mismatch");
  const std::string meta_text = r.bytes();

  Checkpoint ckpt;
  ckpt.params = ModelParams<float>(ModelConfig::from_json(nlohmann::json::parse(config_text)));
  ckpt.metadata = nlohmann::json::parse(meta_text);
  auto& tensors = ckpt.params.tensors();
  if (r.pod<std::uint32_t>() != tensors.size()) r.fail("tensor count does not match its config");
  for (auto& t : tensors) {
    if (r.bytes() != t.name) r.fail("unexpected tensor order near '" + t.name + "'");
    if (r.pod<std::uint32_t>() != 2) r.fail("tensor '" + t.name + "' is not 2-D");
    const auto rows = r.pod<std::uint32_t>();
    const auto cols = r.pod<std::uint32_t>();
    if (rows != t.value.rows() || cols != t.value.cols()) r.fail("shape mismatch for '" + t.name + "'");
    for (Index i = 0; i < t.value.rows(); ++i) {
      for (Index j = 0; j < t.value.cols(); ++j) t.value(i, j) = r.pod<float>();
    }
  }
  return ckpt;
}

}  // namespace fsdnet::net
