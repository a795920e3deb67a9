#include "b2d/nn/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <set>

#include "b2d/error.hpp"

namespace b2d::nn {

namespace {

constexpr char kMagic[4] = {'B', '2', 'D', 'W'};
constexpr std::string_view kOptimizerPrefix = "optimizer/";

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(std::string_view bytes, std::string source) : bytes_(bytes), source_(std::move(source)) {}

  template <typename U>
  U get() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& what) const {
    throw DataError(source_ + ": " + what + " (offset " + std::to_string(pos_) + ")");
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) fail("truncated container");
  }
  std::string_view bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

template <typename T>
void encode_tensor(std::string& out, const Tensor<T>& t) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  put_le<std::uint8_t>(out, sizeof(T) == 4 ? 0 : 1);
  if (t.rank() > 255) throw std::invalid_argument("container: tensor rank above 255");
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) {
    if (d > 0xffffffffu) throw std::invalid_argument("container: dimension above u32 range");
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  }
  for (T v : t.data()) put_le<Bits>(out, std::bit_cast<Bits>(v));
}

template <typename T>
Tensor<T> decode_tensor(Reader& r, const Shape& shape) {
  using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  const std::size_t n = shape_size(shape);
  std::vector<T> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<T>(r.get<Bits>());
  return Tensor<T>(shape, std::move(data));
}

template <typename T>
const Tensor<T>* as(const AnyTensor& t) {
  return std::get_if<Tensor<T>>(&t);
}

}  // namespace

std::string encode_container(const std::vector<NamedTensor>& entries) {
  std::string out(kMagic, sizeof(kMagic));
  put_le<std::uint16_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    if (e.name.size() > 0xffff) throw std::invalid_argument("container: name too long");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(e.name.size()));
    out += e.name;
    std::visit([&](const auto& t) { encode_tensor(out, t); }, e.tensor);
  }
  return out;
}

std::vector<NamedTensor> decode_container(std::string_view bytes, const std::string& source) {
  Reader r(bytes, source);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) r.fail("bad magic (expected B2DW)");
  r.take(4);
  const auto version = r.get<std::uint16_t>();
  if (version != kContainerVersion) r.fail("unsupported container version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint16_t>();
    NamedTensor e;
    e.name = std::string(r.take(name_len));
    const auto dtype = r.get<std::uint8_t>();
    const auto rank = r.get<std::uint8_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>();
    if (dtype == 0) e.tensor = decode_tensor<float>(r, shape);
    else if (dtype == 1) e.tensor = decode_tensor<double>(r, shape);
    else r.fail("unknown dtype " + std::to_string(dtype) + " for '" + e.name + "'");
    out.push_back(std::move(e));
  }
  if (!r.done()) r.fail("trailing bytes after the last entry");
  return out;
}

void write_container(const std::filesystem::path& path, const std::vector<NamedTensor>& entries) {
  const auto bytes = encode_container(entries);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

std::vector<NamedTensor> read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_container(bytes, path.string());
}

template <typename T>
std::vector<NamedTensor> model_state(const Model<T>& model, const Optimizer<T>* optimizer) {
  std::vector<NamedTensor> out;
  const auto params = model.params();
  for (const auto* p : params) out.push_back({p->name, p->value});
  for (const auto& [name, t] : model.buffers()) out.push_back({name, *t});
  if (optimizer && optimizer->state().step > 0) {
    const auto& st = optimizer->state();
    out.push_back({std::string(kOptimizerPrefix) + "step", Tensor<double>({1}, static_cast<double>(st.step))});
    for (std::size_t i = 0; i < st.m.size() && i < params.size(); ++i) {
      out.push_back({std::string(kOptimizerPrefix) + "m/" + params[i]->name, st.m[i]});
      out.push_back({std::string(kOptimizerPrefix) + "v/" + params[i]->name, st.v[i]});
    }
  }
  return out;
}

template <typename T>
void save_weights(const Model<T>& model, const std::filesystem::path& path, const Optimizer<T>* optimizer) {
  write_container(path, model_state(model, optimizer));
}

template <typename T>
void load_state(Model<T>& model, const std::vector<NamedTensor>& entries, Optimizer<T>* optimizer) {
  std::map<std::string_view, const NamedTensor*> by_name;
  for (const auto& e : entries)
    if (!by_name.emplace(e.name, &e).second) throw DataError("weights: duplicate tensor '" + e.name + "'");

  const auto lookup = [&](const std::string& name, const Shape& shape) -> const Tensor<T>& {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw DataError("weights: missing tensor '" + name + "'");
    const auto* t = as<T>(it->second->tensor);
    if (!t) throw DataError("weights: tensor '" + name + "' has the wrong dtype");
    if (t->shape() != shape)
      throw DataError("weights: tensor '" + name + "' has shape " + shape_string(t->shape()) + ", model expects " +
                      shape_string(shape));
    return *t;
  };

  // Validate everything before touching the model.
  auto params = model.params();
  auto buffers = model.buffers();
  std::set<std::string_view> used;
  std::vector<const Tensor<T>*> param_src, buffer_src;
  for (auto* p : params) {
    param_src.push_back(&lookup(p->name, p->value.shape()));
    used.insert(p->name);
  }
  for (auto& [name, t] : buffers) {
    buffer_src.push_back(&lookup(name, t->shape()));
    used.insert(name);
  }
  for (const auto& e : entries)
    if (!used.count(e.name) && !std::string_view(e.name).starts_with(kOptimizerPrefix))
      throw DataError("weights: tensor '" + e.name + "' does not exist in this model");

  std::optional<AdamState<T>> opt_state;
  if (optimizer && by_name.count(std::string(kOptimizerPrefix) + "step")) {
    const auto* step64 = as<double>(by_name.at(std::string(kOptimizerPrefix) + "step")->tensor);
    if (!step64 || step64->size() != 1) throw DataError("weights: optimizer step must be an f64 scalar");
    AdamState<T> st;
    st.step = static_cast<std::int64_t>((*step64)[0]);
    for (auto* p : params) {
      st.m.push_back(lookup(std::string(kOptimizerPrefix) + "m/" + p->name, p->value.shape()));
      st.v.push_back(lookup(std::string(kOptimizerPrefix) + "v/" + p->name, p->value.shape()));
    }
    opt_state = std::move(st);
  }

  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = *param_src[i];
  for (std::size_t i = 0; i < buffers.size(); ++i) *buffers[i].second = *buffer_src[i];
  if (opt_state) optimizer->state() = std::move(*opt_state);
}

template <typename T>
void load_weights(Model<T>& model, const std::filesystem::path& path, Optimizer<T>* optimizer) {
  load_state(model, read_container(path), optimizer);
}

template std::vector<NamedTensor> model_state(const Model<float>&, const Optimizer<float>*);
template std::vector<NamedTensor> model_state(const Model<double>&, const Optimizer<double>*);
template void save_weights(const Model<float>&, const std::filesystem::path&, const Optimizer<float>*);
template void save_weights(const Model<double>&, const std::filesystem::path&, const Optimizer<double>*);
template void load_state(Model<float>&, const std::vector<NamedTensor>&, Optimizer<float>*);
template void load_state(Model<double>&, const std::vector<NamedTensor>&, Optimizer<double>*);
template void load_weights(Model<float>&, const std::filesystem::path&, Optimizer<float>*);
template void load_weights(Model<double>&, const std::filesystem::path&, Optimizer<double>*);

}  // namespace b2d::nn
