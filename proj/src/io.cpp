#include "crane/io.hpp"

#include <bit>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "model container assumes a little-endian host");

namespace crane {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

std::uint64_t parse_u64(const std::string& tok, std::size_t line_no,
                        const char* what) {
  if (tok.empty() || !std::isdigit(static_cast<unsigned char>(tok[0])))
    throw ParseError(line_no, std::string(what) + " is not an unsigned integer: '" + tok + "'");
  errno = 0;
  char* end = nullptr;
  const std::uint64_t v = std::strtoull(tok.c_str(), &end, 10);
  if (errno == ERANGE)
    throw ParseError(line_no, std::string(what) + " out of range: '" + tok + "'");
  if (end != tok.c_str() + tok.size())
    throw ParseError(line_no, std::string(what) + " is not an unsigned integer: '" + tok + "'");
  return v;
}

double parse_weight(const std::string& tok, std::size_t line_no) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end != tok.c_str() + tok.size() || tok.empty())
    throw ParseError(line_no, "weight is not a number: '" + tok + "'");
  if (errno == ERANGE || !std::isfinite(v))
    throw ParseError(line_no, "weight out of range: '" + tok + "'");
  if (v < 0.0) throw ParseError(line_no, "weight must be non-negative: '" + tok + "'");
  return v;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

// ---- binary container helpers --------------------------------------------

struct Writer {
  std::ostream& os;
  void raw(const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }
  void block(const double* src, std::size_t n) {
    u64(n);
    std::vector<float> buf(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = static_cast<float>(src[i]);
    raw(buf.data(), n * sizeof(float));
  }
  void block(const Tensor& t) { block(t.data(), t.numel()); }
  void block(const std::vector<double>& v) { block(v.data(), v.size()); }
};

struct Reader {
  std::istream& is;
  const std::string& path;
  void raw(void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!is) throw std::runtime_error(path + ": truncated model file");
  }
  std::uint16_t u16() { std::uint16_t v; raw(&v, sizeof v); return v; }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  float f32() { float v; raw(&v, sizeof v); return v; }
  void block(double* dst, std::size_t n) {
    const std::uint64_t count = u64();
    if (count != n)
      throw std::runtime_error(path + ": block size mismatch (got " +
                               std::to_string(count) + ", want " +
                               std::to_string(n) + ")");
    std::vector<float> buf(n);
    raw(buf.data(), n * sizeof(float));
    for (std::size_t i = 0; i < n; ++i) dst[i] = static_cast<double>(buf[i]);
  }
  void block(Tensor& t) { block(t.data(), t.numel()); }
  void block(std::vector<double>& v) { block(v.data(), v.size()); }
};

template <class F>
void for_each_encoder_param(EncoderNet& e, F&& fn) {
  fn(e.w1); fn(e.b1); fn(e.g1); fn(e.be1);
  fn(e.w2); fn(e.b2); fn(e.g2); fn(e.be2);
  fn(e.w3); fn(e.b3);
}
template <class F>
void for_each_encoder_param(const EncoderNet& e, F&& fn) {
  fn(e.w1); fn(e.b1); fn(e.g1); fn(e.be1);
  fn(e.w2); fn(e.b2); fn(e.g2); fn(e.be2);
  fn(e.w3); fn(e.b3);
}

constexpr char kMagic[4] = {'C', 'R', 'N', 'E'};
constexpr std::uint16_t kVersion = 1;

}  // namespace

ParsedStream parse_edge_list(std::istream& in) {
  ParsedStream out;
  std::string line;
  std::size_t line_no = 0;
  constexpr std::uint64_t kIdMod = 1ull << 32;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto toks = split_ws(line);
    if (toks.size() < 3 || toks.size() > 4)
      throw ParseError(line_no, "expected 'origin destination weight [timestamp]', got " +
                                    std::to_string(toks.size()) + " fields");
    std::uint64_t o = parse_u64(toks[0], line_no, "origin");
    std::uint64_t d = parse_u64(toks[1], line_no, "destination");
    if (o >= kIdMod || d >= kIdMod) {
      out.reduced_ids += (o >= kIdMod) + (d >= kIdMod);
      o %= kIdMod;
      d %= kIdMod;
    }
    const double w = parse_weight(toks[2], line_no);
    out.updates.push_back({static_cast<std::uint32_t>(o),
                           static_cast<std::uint32_t>(d), w});
  }
  return out;
}

ParsedStream load_edge_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open edge list: " + path);
  return parse_edge_list(in);
}

std::map<std::string, std::string> parse_config(std::istream& in) {
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError(line_no, "expected key=value, got '" + t + "'");
    const std::string key = trim(t.substr(0, eq));
    const std::string val = trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(line_no, "empty key");
    if (!kv.emplace(key, val).second)
      throw ParseError(line_no, "duplicate key '" + key + "'");
  }
  return kv;
}

std::map<std::string, std::string> load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config: " + path);
  return parse_config(in);
}

void apply_config(const std::map<std::string, std::string>& kv,
                  TrainConfig& train, TaskConfig& task) {
  auto as_u64 = [](const std::string& k, const std::string& v) -> std::uint64_t {
    try {
      std::size_t pos = 0;
      const std::uint64_t x = std::stoull(v, &pos);
      if (pos != v.size()) throw std::invalid_argument("");
      return x;
    } catch (...) {
      throw std::invalid_argument("config: bad unsigned value for '" + k +
                                  "': '" + v + "'");
    }
  };
  auto as_f64 = [](const std::string& k, const std::string& v) -> double {
    try {
      std::size_t pos = 0;
      const double x = std::stod(v, &pos);
      if (pos != v.size() || !std::isfinite(x)) throw std::invalid_argument("");
      return x;
    } catch (...) {
      throw std::invalid_argument("config: bad numeric value for '" + k +
                                  "': '" + v + "'");
    }
  };
  for (const auto& [k, v] : kv) {
    if (k == "theta") train.theta = as_f64(k, v);
    else if (k == "tau") train.tau = as_f64(k, v);
    else if (k == "eps") train.eps = as_f64(k, v);
    else if (k == "n_max") train.n_max = static_cast<std::uint32_t>(as_u64(k, v));
    else if (k == "b_size") train.b_size = static_cast<std::size_t>(as_u64(k, v));
    else if (k == "lr") train.lr = as_f64(k, v);
    else if (k == "beta1") train.beta1 = as_f64(k, v);
    else if (k == "beta2") train.beta2 = as_f64(k, v);
    else if (k == "adam_eps") train.adam_eps = as_f64(k, v);
    else if (k == "weight_decay") train.weight_decay = as_f64(k, v);
    else if (k == "total_tasks") train.total_tasks = as_u64(k, v);
    else if (k == "steps_per_task")
      train.steps_per_task = static_cast<std::uint32_t>(as_u64(k, v));
    else if (k == "task_batch")
      train.task_batch = static_cast<std::uint32_t>(as_u64(k, v));
    else if (k == "gamma") task.gamma = as_u64(k, v);
    else if (k == "alpha_min") task.alpha_min = as_f64(k, v);
    else if (k == "alpha_max") task.alpha_max = as_f64(k, v);
    else if (k == "w_mult_min") task.w_mult_min = as_f64(k, v);
    else if (k == "w_mult_max") task.w_mult_max = as_f64(k, v);
    else if (k == "id_space") task.id_space = as_u64(k, v);
    else if (k == "dist") {
      if (v == "zipf") task.dist = WeightDist::zipf;
      else if (v == "uniform") task.dist = WeightDist::uniform;
      else throw std::invalid_argument("config: dist must be zipf or uniform, got '" + v + "'");
    } else {
      throw std::invalid_argument("config: unknown key '" + k + "'");
    }
  }
}

void save_model(const CraneModel& model, std::span<const Tensor> memories,
                const std::string& path) {
  if (memories.size() > model.n_max)
    throw std::invalid_argument("save_model: more memories than layers");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::invalid_argument("cannot open for writing: " + path);
  Writer w{os};
  w.raw(kMagic, 4);
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(kEmbedDim));
  w.u32(static_cast<std::uint32_t>(kEmbedDim));
  w.u32(model.n_max);
  w.u32(static_cast<std::uint32_t>(memories.size()));
  w.f32(static_cast<float>(model.theta));
  w.f32(static_cast<float>(model.tau));
  w.f32(static_cast<float>(model.eps));
  for (std::uint32_t i = 0; i < model.n_max; ++i) {
    for_each_encoder_param(model.enc_o[i], [&](const Tensor& t) { w.block(t); });
    for_each_encoder_param(model.enc_d[i], [&](const Tensor& t) { w.block(t); });
  }
  w.block(model.dec_w);
  w.block(model.dec_b);
  for (std::uint32_t i = 0; i < model.n_max; ++i)
    for (const EncoderNet* e : {&model.enc_o[i], &model.enc_d[i]}) {
      w.block(e->bn1.mean);
      w.block(e->bn1.var);
      w.block(e->bn2.mean);
      w.block(e->bn2.var);
    }
  for (const Tensor& m : memories) {
    if (m.rows != kEmbedDim || m.cols != kEmbedDim)
      throw std::invalid_argument("save_model: memory layer has wrong shape");
    w.block(m);
  }
  os.flush();
  if (!os) throw std::runtime_error("write failed: " + path);
}

LoadedModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::invalid_argument("cannot open model: " + path);
  Reader r{is, path};
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(path + ": not a model file (bad magic)");
  if (r.u16() != kVersion)
    throw std::runtime_error(path + ": unsupported model version");
  const std::uint32_t H = r.u32(), W = r.u32();
  if (H != kEmbedDim || W != kEmbedDim)
    throw std::runtime_error(path + ": unsupported memory dimensions");
  const std::uint32_t n_max = r.u32();
  const std::uint32_t L = r.u32();
  if (n_max == 0 || L > n_max)
    throw std::runtime_error(path + ": inconsistent layer counts");
  LoadedModel out;
  CraneModel& m = out.model;
  m.n_max = n_max;
  m.theta = static_cast<double>(r.f32());
  m.tau = static_cast<double>(r.f32());
  m.eps = static_cast<double>(r.f32());
  if (!(m.theta > 1.0) || !(m.tau > 0.0) || !(m.eps > 0.0))
    throw std::runtime_error(path + ": invalid header parameters");
  m.enc_o.resize(n_max);
  m.enc_d.resize(n_max);
  for (std::uint32_t i = 0; i < n_max; ++i) {
    for_each_encoder_param(m.enc_o[i], [&](Tensor& t) { r.block(t); });
    for_each_encoder_param(m.enc_d[i], [&](Tensor& t) { r.block(t); });
  }
  m.dec_w = Tensor(n_max, 1);
  m.dec_b = Tensor(1, 1);
  r.block(m.dec_w);
  r.block(m.dec_b);
  for (std::uint32_t i = 0; i < n_max; ++i)
    for (EncoderNet* e : {&m.enc_o[i], &m.enc_d[i]}) {
      r.block(e->bn1.mean);
      r.block(e->bn1.var);
      r.block(e->bn2.mean);
      r.block(e->bn2.var);
    }
  out.memories.assign(L, Tensor(kEmbedDim, kEmbedDim));
  for (Tensor& mem : out.memories) r.block(mem);
  if (is.peek() != std::char_traits<char>::eof())
    throw std::runtime_error(path + ": trailing bytes after model payload");
  return out;
}

}  // namespace crane
