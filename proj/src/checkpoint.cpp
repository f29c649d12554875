#include "fdnet/checkpoint.hpp"

#include "fdnet/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace fdnet {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& os) : os_(os) {}

  template <class T>
  void pod(T value) {
    os_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    os_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const Scalar* p, Index n) { os_.write(reinterpret_cast<const char*>(p), n * sizeof(Scalar)); }
  void indices(const std::vector<Index>& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    for (Index x : v) pod<std::int64_t>(x);
  }
  void array(const Array& a) {
    pod(static_cast<std::uint64_t>(a.size()));
    doubles(a.data(), a.size());
  }
  void strings(const std::vector<std::string>& v) {
    pod(static_cast<std::uint64_t>(v.size()));
    for (const auto& s : v) str(s);
  }

 private:
  std::ostream& os_;
};

class Reader {
 public:
  explicit Reader(std::istream& is) : is_(is) {}

  void bytes(char* out, std::size_t n) {
    is_.read(out, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) fail(Errc::corrupt_checkpoint, "checkpoint is truncated");
  }
  template <class T>
  T pod() {
    T value;
    bytes(reinterpret_cast<char*>(&value), sizeof(T));
    return value;
  }
  std::uint64_t count(std::uint64_t limit = 1ull << 40) {
    const auto n = pod<std::uint64_t>();
    if (n > limit) fail(Errc::corrupt_checkpoint, "implausible element count in checkpoint");
    return n;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    if (n > (1u << 20)) fail(Errc::corrupt_checkpoint, "implausible string length in checkpoint");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }
  std::vector<Index> indices() {
    std::vector<Index> v(count(1 << 20));
    for (auto& x : v) x = pod<std::int64_t>();
    return v;
  }
  Array array() {
    Array a(static_cast<Index>(count()));
    bytes(reinterpret_cast<char*>(a.data()), static_cast<std::size_t>(a.size()) * sizeof(Scalar));
    return a;
  }
  std::vector<std::string> strings() {
    std::vector<std::string> v(count(1 << 20));
    for (auto& s : v) s = str();
    return v;
  }

 private:
  std::istream& is_;
};

}  // namespace

void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
  Writer w(os);
  os.write(checkpoint_magic, sizeof checkpoint_magic);
  w.pod(checkpoint_version);

  const ModelConfig& c = ck.model.config();
  w.pod(static_cast<std::uint32_t>(c.variant));
  for (Index v : {c.input_length, c.output_length, c.branches, c.layers, c.embed_dim, c.heads}) w.pod<std::int64_t>(v);
  w.pod(c.alpha);
  w.pod(c.dropout);
  w.indices(ck.model.plan().lengths);
  w.indices(ck.model.plan().depths);

  const auto params = ck.model.parameters();
  w.pod(static_cast<std::uint64_t>(params.size()));
  for (const auto& p : params) {
    w.str(p.name);
    const Shape& s = p.tensor->shape();
    w.pod(static_cast<std::uint32_t>(s.size()));
    for (Index e : s) w.pod<std::int64_t>(e);
    w.doubles(p.tensor->ptr(), p.tensor->size());
  }

  w.array(ck.standardizer.mean);
  w.array(ck.standardizer.std);
  w.strings(ck.standardizer.degenerate_columns);
  w.strings(ck.columns);
  w.str(ck.target);
  w.pod<std::int64_t>(ck.meta.epoch);
  w.pod(ck.meta.best_val_mse);
  if (!os) fail(Errc::io, "failed to write checkpoint");
}

Checkpoint read_checkpoint(std::istream& is) {
  Reader r(is);
  char magic[sizeof checkpoint_magic];
  is.read(magic, sizeof magic);
  if (is.gcount() != static_cast<std::streamsize>(sizeof magic) ||
      std::memcmp(magic, checkpoint_magic, sizeof magic) != 0)
    fail(Errc::incompatible_checkpoint, "not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != checkpoint_version)
    fail(Errc::incompatible_checkpoint, "unsupported checkpoint version " + std::to_string(version));

  ModelConfig c;
  const auto variant = r.pod<std::uint32_t>();
  if (variant > 1) fail(Errc::corrupt_checkpoint, "unknown model variant in checkpoint");
  c.variant = static_cast<Variant>(variant);
  for (Index* v : {&c.input_length, &c.output_length, &c.branches, &c.layers, &c.embed_dim, &c.heads})
    *v = r.pod<std::int64_t>();
  c.alpha = r.pod<Scalar>();
  c.dropout = r.pod<Scalar>();
  const auto lengths = r.indices();
  const auto depths = r.indices();

  ForecastModel model = [&] {
    try {
      return ForecastModel::create(c, 0);
    } catch (const Error& e) {
      fail(Errc::corrupt_checkpoint, std::string("checkpoint holds an invalid model configuration: ") + e.what());
    }
  }();
  if (model.plan().lengths != lengths || model.plan().depths != depths)
    fail(Errc::corrupt_checkpoint, "stored focal plan does not match the stored configuration");

  auto params = model.parameters();
  if (r.pod<std::uint64_t>() != params.size()) fail(Errc::corrupt_checkpoint, "parameter count mismatch");
  for (auto& p : params) {
    const std::string name = r.str();
    if (name != p.name) fail(Errc::corrupt_checkpoint, "expected parameter " + p.name + ", found " + name);
    const auto rank = r.pod<std::uint32_t>();
    Shape shape(rank);
    for (auto& e : shape) e = r.pod<std::int64_t>();
    if (shape != p.tensor->shape())
      fail(Errc::corrupt_checkpoint, "shape mismatch for " + name + ": " + to_string(shape));
    r.bytes(reinterpret_cast<char*>(p.tensor->ptr()), static_cast<std::size_t>(p.tensor->size()) * sizeof(Scalar));
  }

  Standardizer st;
  st.mean = r.array();
  st.std = r.array();
  st.degenerate_columns = r.strings();
  std::vector<std::string> columns = r.strings();
  std::string target = r.str();
  CheckpointMeta meta;
  meta.epoch = r.pod<std::int64_t>();
  meta.best_val_mse = r.pod<Scalar>();
  if (st.mean.size() != st.std.size() || st.mean.size() != static_cast<Index>(columns.size()))
    fail(Errc::corrupt_checkpoint, "standardizer and column list disagree");
  if (is.peek() != std::char_traits<char>::eof()) fail(Errc::corrupt_checkpoint, "trailing bytes after checkpoint");
  return Checkpoint{std::move(model), std::move(st), std::move(columns), std::move(target), meta};
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) fail(Errc::io, "cannot write " + path.string());
  write_checkpoint(os, ck);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail(Errc::io, "cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace fdnet
