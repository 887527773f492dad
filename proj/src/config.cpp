#include "latent_atlas/config.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "latent_atlas/error.hpp"

namespace latent_atlas {

namespace {

struct ValueError {
  std::string message;
};

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::uint64_t to_uint(std::string_view s) {
  if (s.empty()) throw ValueError{"expected a non-negative integer"};
  std::uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw ValueError{"expected a non-negative integer, got '" + std::string(s) + "'"};
    const std::uint64_t digit = static_cast<std::uint64_t>(c - '0');
    if (v > (UINT64_MAX - digit) / 10) throw ValueError{"integer out of range"};
    v = v * 10 + digit;
  }
  return v;
}

double to_real(std::string_view s) {
  const std::string text(s);
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size() || !std::isfinite(v)) {
    throw ValueError{"expected a finite number, got '" + text + "'"};
  }
  return v;
}

std::vector<std::string> to_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t comma = std::min(s.find(',', start), s.size());
    const std::string_view item = trim(s.substr(start, comma - start));
    if (item.empty()) throw ValueError{"empty list item"};
    out.emplace_back(item);
    start = comma + 1;
  }
  return out;
}

template <typename T>
std::string join(const std::vector<T>& items) {
  std::ostringstream out;
  for (std::size_t i = 0; i < items.size(); ++i) out << (i ? "," : "") << items[i];
  return out.str();
}

struct Key {
  const char* name;
  const char* help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define LA_UINT(field) \
  [](RunConfig& c, std::string_view v) { c.field = static_cast<decltype(c.field)>(to_uint(v)); }, \
      [](const RunConfig& c) { return std::to_string(c.field); }
#define LA_REAL(field) \
  [](RunConfig& c, std::string_view v) { c.field = to_real(v); }, \
      [](const RunConfig& c) { return format_double(c.field); }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      {"dataset.kind", "gmm2d or shapes16",
       [](RunConfig& c, std::string_view v) {
         if (v != "gmm2d" && v != "shapes16") throw ValueError{"expected gmm2d or shapes16"};
         c.dataset.kind = parse_dataset_kind(v);
       },
       [](const RunConfig& c) { return dataset_kind_name(c.dataset.kind); }},
      {"dataset.k", "gmm2d mode count", LA_UINT(dataset.k)},
      {"dataset.radius", "gmm2d circle radius", LA_REAL(dataset.radius)},
      {"dataset.std", "gmm2d per-mode standard deviation", LA_REAL(dataset.std)},
      {"dataset.shapes", "shapes16 classes, comma separated subset of disk,square,bar,ring",
       [](RunConfig& c, std::string_view v) { c.dataset.shapes = to_list(v); },
       [](const RunConfig& c) { return join(c.dataset.shapes); }},
      {"dataset.size_min", "shapes16 smallest half-extent in pixels", LA_REAL(dataset.size_min)},
      {"dataset.size_max", "shapes16 largest half-extent in pixels", LA_REAL(dataset.size_max)},
      {"dataset.jitter", "shapes16 maximum center offset in pixels", LA_REAL(dataset.jitter)},
      {"dataset.crop", "shapes16 central crop edge (16 = full grid, 8 gives d = 64)", LA_UINT(dataset.crop)},
      {"dataset.count", "number of samples", LA_UINT(dataset.count)},
      {"dataset.seed", "dataset seed", LA_UINT(dataset.seed)},
      {"schedule.T", "diffusion timesteps", LA_UINT(schedule.T)},
      {"schedule.beta_start", "beta at t = 1", LA_REAL(schedule.beta_start)},
      {"schedule.beta_end", "beta at t = T", LA_REAL(schedule.beta_end)},
      {"model.hidden", "hidden widths, comma separated",
       [](RunConfig& c, std::string_view v) {
         c.model.hidden.clear();
         for (const std::string& item : to_list(v)) c.model.hidden.push_back(to_uint(item));
       },
       [](const RunConfig& c) { return join(c.model.hidden); }},
      {"model.bottleneck", "index of the hidden layer used as h", LA_UINT(model.bottleneck_index)},
      {"model.time_embed_dim", "sinusoidal embedding width (even)", LA_UINT(model.time_embed_dim)},
      {"model.activation", "silu or identity",
       [](RunConfig& c, std::string_view v) {
         if (v != "silu" && v != "identity") throw ValueError{"expected silu or identity"};
         c.model.activation = parse_activation(v);
       },
       [](const RunConfig& c) { return std::string(activation_name(c.model.activation)); }},
      {"train.steps", "optimizer steps", LA_UINT(train.steps)},
      {"train.batch_size", "samples per step", LA_UINT(train.batch_size)},
      {"train.learn_rate", "Adam step size", LA_REAL(train.learn_rate)},
      {"train.beta1", "Adam first-moment decay", LA_REAL(train.beta1)},
      {"train.beta2", "Adam second-moment decay", LA_REAL(train.beta2)},
      {"train.eps_adam", "Adam denominator offset", LA_REAL(train.eps_adam)},
      {"train.seed", "model init and batch seed", LA_UINT(train.seed)},
      {"basis.n", "basis size", LA_UINT(basis.n)},
      {"basis.chunk_size", "directions per jvp/vjp batch", LA_UINT(basis.chunk_size)},
      {"basis.min_iter", "iterations before convergence may be declared", LA_UINT(basis.min_iter)},
      {"basis.max_iter", "iteration cap", LA_UINT(basis.max_iter)},
      {"basis.threshold", "projector change that counts as converged", LA_REAL(basis.convergence_threshold)},
      {"basis.seed", "initial subspace seed", LA_UINT(basis.seed)},
      {"sampling.num_steps", "DDIM steps for sampling and inversion", LA_UINT(sampling.num_steps)},
      {"sampling.eta", "DDIM stochasticity in [0, 1]", LA_REAL(sampling.eta)},
      {"sampling.t_boost_frac", "eta is 1 below this fraction of T (0 disables)", LA_REAL(sampling.t_boost_frac)},
      {"edit.t_edit_frac", "edit timestep as a fraction of T", LA_REAL(edit.t_edit_frac)},
      {"edit.gamma", "guidance scale, or auto for the per-timestep default",
       [](RunConfig& c, std::string_view v) {
         if (v == "auto") {
           c.edit.gamma.reset();
         } else {
           c.edit.gamma = to_real(v);
         }
       },
       [](const RunConfig& c) { return c.edit.gamma ? format_double(*c.edit.gamma) : std::string("auto"); }},
      {"edit.direction", "basis direction index", LA_UINT(edit.direction)},
      {"edit.method", "x_space_guidance or direct_addition",
       [](RunConfig& c, std::string_view v) {
         if (v != "x_space_guidance" && v != "x_space" && v != "direct_addition" && v != "direct") {
           throw ValueError{"expected x_space_guidance or direct_addition"};
         }
         c.edit.method = parse_edit_method(v);
       },
       [](const RunConfig& c) { return std::string(edit_method_name(c.edit.method)); }},
      {"edit.repeat", "guidance steps applied", LA_UINT(edit.repeat)},
      {"edit.seed", "boosting noise seed", LA_UINT(edit.seed)},
      {"workspace.path", "workspace directory",
       [](RunConfig& c, std::string_view v) { c.workspace = std::string(v); },
       [](const RunConfig& c) { return c.workspace; }},
  };
  return table;
}

#undef LA_UINT
#undef LA_REAL

[[noreturn]] void violated(const std::string& constraint, const std::string& message) {
  fail(ErrorCode::ValidationError, message + " [" + constraint + "]", constraint);
}

std::size_t fraction_of(double frac, std::size_t T) {
  return static_cast<std::size_t>(std::llround(frac * static_cast<double>(T)));
}

}  // namespace

std::size_t RunConfig::t_boost() const { return fraction_of(sampling.t_boost_frac, schedule.T); }
std::size_t RunConfig::t_edit() const { return fraction_of(edit.t_edit_frac, schedule.T); }
double RunConfig::gamma() const { return edit.gamma ? *edit.gamma : default_gamma(edit.t_edit_frac); }

NoiseSchedule RunConfig::make_schedule() const {
  return make_linear_schedule(schedule.T, schedule.beta_start, schedule.beta_end);
}

TrajectoryConfig RunConfig::trajectory(std::uint64_t seed) const {
  return TrajectoryConfig{sampling.num_steps, sampling.eta, t_boost(), seed};
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no);
    if (eq == std::string_view::npos) fail(ErrorCode::ParseError, where + ": expected 'key = value'", where);
    const std::string key(trim(line.substr(0, eq)));
    const std::string_view value = trim(line.substr(eq + 1));
    const Key* entry = nullptr;
    for (const Key& k : keys())
      if (key == k.name) entry = &k;
    if (!entry) fail(ErrorCode::ParseError, where + ": unknown key '" + key + "'", where + " " + key);
    try {
      entry->set(config, value);
    } catch (const ValueError& e) {
      fail(ErrorCode::ParseError, where + ": " + key + ": " + e.message, where + " " + key);
    }
  }
  config.model.input_dim = data_dim(config.dataset);
  config.model.timesteps = config.schedule.T;
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig c = parse_config(read_file(path));
  return c;
}

void validate_config(const RunConfig& c) {
  try {
    validate_dataset_spec(c.dataset);
  } catch (const Error& e) {
    violated(e.detail().empty() ? "dataset" : e.detail(), e.what());
  }
  if (c.schedule.T == 0) violated("T>=1", "schedule.T must be >= 1");
  if (!(c.schedule.beta_start > 0.0 && c.schedule.beta_start <= c.schedule.beta_end && c.schedule.beta_end < 1.0)) {
    violated("0<beta_start<=beta_end<1", "invalid beta range");
  }
  const std::size_t d = data_dim(c.dataset);
  if (c.model.input_dim != d) violated("model.input_dim==d", "model input dimension must match the dataset");
  if (c.model.hidden.empty()) violated("hidden non-empty", "model.hidden needs at least one width");
  for (std::size_t w : c.model.hidden)
    if (w == 0) violated("hidden>=1", "hidden widths must be positive");
  if (c.model.bottleneck_index >= c.model.hidden.size()) violated("bottleneck<layers", "model.bottleneck out of range");
  if (c.model.time_embed_dim == 0 || c.model.time_embed_dim % 2 != 0) {
    violated("time_embed_dim even", "model.time_embed_dim must be a positive even number");
  }
  if (c.train.steps == 0) violated("steps>=1", "train.steps must be >= 1");
  if (c.train.batch_size == 0) violated("batch_size>=1", "train.batch_size must be >= 1");
  if (!(c.train.learn_rate > 0.0)) violated("learn_rate>0", "train.learn_rate must be positive");
  if (!(c.train.beta1 >= 0.0 && c.train.beta1 < 1.0 && c.train.beta2 >= 0.0 && c.train.beta2 < 1.0)) {
    violated("0<=beta<1", "Adam decays must be in [0, 1)");
  }
  if (!(c.train.eps_adam > 0.0)) violated("eps_adam>0", "train.eps_adam must be positive");

  const std::size_t dh = c.model.hidden[c.model.bottleneck_index];
  if (c.basis.n == 0) violated("n>=1", "basis.n must be >= 1");
  if (c.basis.n > std::min(d, dh)) {
    violated("n<=min(d,D_h)", "basis.n = " + std::to_string(c.basis.n) + " exceeds min(d, D_h) = " +
                                  std::to_string(std::min(d, dh)));
  }
  if (c.basis.chunk_size == 0) violated("chunk_size>=1", "basis.chunk_size must be >= 1");
  if (c.basis.min_iter == 0 || c.basis.max_iter < c.basis.min_iter) {
    violated("max_iter>=min_iter>=1", "need basis.max_iter >= basis.min_iter >= 1");
  }
  if (!(c.basis.convergence_threshold > 0.0)) violated("threshold>0", "basis.threshold must be positive");

  if (c.sampling.num_steps == 0 || c.sampling.num_steps > c.schedule.T) {
    violated("num_steps<=T", "sampling.num_steps must be in 1..T");
  }
  if (!(c.sampling.eta >= 0.0 && c.sampling.eta <= 1.0)) violated("0<=eta<=1", "sampling.eta must be in [0, 1]");
  if (!(c.sampling.t_boost_frac >= 0.0 && c.sampling.t_boost_frac <= 1.0)) {
    violated("0<=t_boost<=T", "sampling.t_boost_frac must be in [0, 1]");
  }
  if (!(c.edit.t_edit_frac > 0.0 && c.edit.t_edit_frac <= 1.0)) {
    violated("0<t_edit<=T", "edit.t_edit_frac must be in (0, 1]");
  }
  if (c.t_edit() < c.t_boost()) {
    violated("t_edit>=t_boost", "t_edit = " + std::to_string(c.t_edit()) + " is below t_boost = " +
                                    std::to_string(c.t_boost()));
  }
  if (c.edit.direction >= c.basis.n) violated("direction<n", "edit.direction must be below basis.n");
  if (c.edit.repeat == 0) violated("repeat_count>=1", "edit.repeat must be >= 1");
}

std::string config_to_text(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const Key& k : keys()) {
    const std::string name = k.name;
    const std::string prefix = name.substr(0, name.find('.'));
    if (prefix != section) {
      if (!section.empty()) out += '\n';
      section = prefix;
    }
    out += name + " = " + k.get(config) + "\n";
  }
  return out;
}

std::string config_reference() {
  std::string out;
  for (const Key& k : keys()) out += std::string(k.name) + "  " + k.help + "\n";
  return out;
}

}  // namespace latent_atlas
