#include "tende/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "tende/errors.hpp"
#include "tende/parallel.hpp"

namespace tende {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  }
  return out;
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw std::invalid_argument("config: '" + key + "' expects a boolean, got '" + v + "'");
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) h = (h ^ c) * 0x100000001b3ULL;
  return h;
}

}  // namespace

// ---------------------------------------------------------------- configuration

void RunConfig::validate() const {
  if (n_seeds < 1) throw std::invalid_argument("n_seeds must be >= 1");
  if (n_samples < 2) throw std::invalid_argument("n_samples must be >= 2");
  if (k < 1 || l < 1) throw std::invalid_argument("lags must be >= 1");
  if (directions.empty()) throw std::invalid_argument("no direction selected");
  system.linear.validate();
  system.joint.validate();
  estimator.validate();
  train.validate();
}

PipelineConfig RunConfig::pipeline(Direction direction) const {
  PipelineConfig p;
  p.k = k;
  p.l = l;
  p.direction = direction;
  p.estimator = estimator;
  p.train = train;
  p.n_seeds = n_seeds;
  p.base_seed = mix_seed(seed, direction == Direction::kXToY ? 11 : 12);
  p.holdout_fraction = holdout_fraction;
  p.threads = threads;
  p.all_variants = all_variants;
  return p;
}

std::map<std::string, std::string> parse_key_values(std::istream& is) {
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    if (!out.emplace(key, trim(line.substr(eq + 1))).second) {
      throw std::invalid_argument("config: repeated key '" + key + "'");
    }
  }
  return out;
}

std::map<std::string, std::string> read_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  return parse_key_values(in);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys{
      "system",     "lambda",        "rho",          "b_x",          "b_y",
      "sigma_x2",   "sigma_y2",      "n_samples",    "k",            "l",
      "direction",  "approach",      "option",       "sigma",        "mc_draws",
      "epochs",     "batch_size",    "learning_rate", "hidden_width", "hidden_layers",
      "time_embed_dim", "train_time", "ema_decay",   "final_lr_fraction", "n_seeds",
      "seed",       "holdout_fraction", "all_variants", "threads",   "output_dir"};
  return keys;
}

void apply_config(RunConfig& cfg, const std::map<std::string, std::string>& values) {
  for (const auto& [key, v] : values) {
    if (key == "system") {
      cfg.system.kind = parse_system_kind(v);
    } else if (key == "lambda") {
      const double lam = to_double(key, v);
      cfg.system.linear.lambda = lam;
      cfg.system.joint.lambda = lam;
    } else if (key == "rho") {
      cfg.system.joint.rho = to_double(key, v);
    } else if (key == "b_x") {
      cfg.system.linear.b_x = to_double(key, v);
    } else if (key == "b_y") {
      cfg.system.linear.b_y = to_double(key, v);
    } else if (key == "sigma_x2") {
      cfg.system.linear.sigma_x2 = to_double(key, v);
    } else if (key == "sigma_y2") {
      cfg.system.linear.sigma_y2 = to_double(key, v);
    } else if (key == "n_samples") {
      cfg.n_samples = to_integer(key, v);
    } else if (key == "k") {
      cfg.k = static_cast<int>(to_integer(key, v));
    } else if (key == "l") {
      cfg.l = static_cast<int>(to_integer(key, v));
    } else if (key == "direction") {
      if (v == "both") {
        cfg.directions = {Direction::kXToY, Direction::kYToX};
      } else {
        cfg.directions = {parse_direction(v)};
      }
    } else if (key == "approach") {
      cfg.estimator.approach = parse_approach(v);
      cfg.train.approach = cfg.estimator.approach;
    } else if (key == "option") {
      const long long o = to_integer(key, v);
      if (o != 1 && o != 2) throw std::invalid_argument("config: option must be 1 or 2");
      cfg.estimator.option = static_cast<EstimatorOption>(o);
    } else if (key == "sigma") {
      cfg.estimator.sigma = to_double(key, v);
    } else if (key == "mc_draws") {
      cfg.estimator.mc_time_draws_per_point = static_cast<int>(to_integer(key, v));
    } else if (key == "epochs") {
      cfg.train.epochs = static_cast<int>(to_integer(key, v));
    } else if (key == "batch_size") {
      cfg.train.batch_size = static_cast<int>(to_integer(key, v));
    } else if (key == "learning_rate") {
      cfg.train.adam.learning_rate = to_double(key, v);
    } else if (key == "hidden_width") {
      cfg.train.layout.hidden_width = static_cast<int>(to_integer(key, v));
    } else if (key == "hidden_layers") {
      cfg.train.layout.hidden_layers = static_cast<int>(to_integer(key, v));
    } else if (key == "time_embed_dim") {
      cfg.train.layout.time_embed_dim = static_cast<int>(to_integer(key, v));
    } else if (key == "train_time") {
      cfg.train.time_sampling = parse_train_time_sampling(v);
    } else if (key == "ema_decay") {
      cfg.train.ema_decay = to_double(key, v);
    } else if (key == "final_lr_fraction") {
      cfg.train.final_lr_fraction = to_double(key, v);
    } else if (key == "n_seeds") {
      cfg.n_seeds = static_cast<int>(to_integer(key, v));
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(to_integer(key, v));
    } else if (key == "holdout_fraction") {
      cfg.holdout_fraction = to_double(key, v);
    } else if (key == "all_variants") {
      cfg.all_variants = to_bool(key, v);
    } else if (key == "threads") {
      cfg.threads = static_cast<int>(to_integer(key, v));
    } else if (key == "output_dir") {
      cfg.output_dir = v;
    } else {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
}

// ---------------------------------------------------------------- results CSV

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

void check_field(const std::string& s) {
  if (s.find_first_of(",\n\r") != std::string::npos) {
    throw std::invalid_argument("result field may not contain ',' or newlines: '" + s + "'");
  }
}

double parse_number(const std::string& s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("trailing characters");
  return v;
}

}  // namespace

void write_result_row(std::ostream& os, const ResultRow& r) {
  check_field(r.system);
  check_field(r.direction);
  check_field(r.variant);
  os << r.system << ',' << r.n << ',' << format_number(r.param) << ',' << r.direction << ','
     << r.variant << ',' << r.seed << ',' << format_number(r.estimate) << ','
     << (r.truth ? format_number(*r.truth) : std::string()) << ',' << format_number(r.wall_seconds)
     << '\n';
}

std::vector<ResultRow> parse_results(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != kResultHeader) {
    throw IoError("results: missing or unexpected header");
  }
  std::vector<ResultRow> rows;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 9) throw IoError("results line " + std::to_string(lineno) + ": expected 9 fields");
    try {
      ResultRow r;
      r.system = f[0];
      r.n = std::stoll(f[1]);
      r.param = parse_number(f[2]);
      r.direction = f[3];
      r.variant = f[4];
      r.seed = std::stoi(f[5]);
      r.estimate = parse_number(f[6]);
      if (!f[7].empty()) r.truth = parse_number(f[7]);
      r.wall_seconds = parse_number(f[8]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw IoError("results line " + std::to_string(lineno) + ": malformed field");
    }
  }
  return rows;
}

std::vector<ResultRow> read_results(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open results file " + path.string());
  return parse_results(in);
}

void append_results(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  bool fresh = true;
  std::error_code ec;
  if (std::filesystem::exists(path, ec) && std::filesystem::file_size(path, ec) > 0) {
    std::ifstream in(path);
    std::string header;
    if (!in || !std::getline(in, header)) throw IoError("cannot read " + path.string());
    if (trim(header) != kResultHeader) {
      throw IoError(path.string() + " exists with a different header; refusing to append");
    }
    fresh = false;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::app);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  if (fresh) out << kResultHeader << '\n';
  for (const ResultRow& r : rows) write_result_row(out, r);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<ResultSummary> summarize_rows(const std::vector<ResultRow>& rows) {
  std::vector<ResultSummary> out;
  std::vector<std::vector<double>> values;
  for (const ResultRow& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const ResultSummary& s) {
      return s.system == r.system && s.n == r.n && s.param == r.param && s.direction == r.direction &&
             s.variant == r.variant;
    });
    if (it == out.end()) {
      out.push_back({r.system, r.n, r.param, r.direction, r.variant, 0.0, 0.0, r.truth, 0});
      values.emplace_back();
      it = out.end() - 1;
    }
    values[static_cast<std::size_t>(it - out.begin())].push_back(r.estimate);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    const TeEstimate e = summarize(values[i]);
    out[i].mean = e.value;
    out[i].std_dev = e.std_dev;
    out[i].seeds = static_cast<int>(values[i].size());
  }
  return out;
}

// ---------------------------------------------------------------- SVG

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::vector<double> nice_ticks(double lo, double hi, int target = 5) {
  if (!(hi > lo)) return {lo};
  const double raw = (hi - lo) / target;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (step >= raw) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step - 1e-9) * step; t <= hi + 1e-9 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

}  // namespace

void write_svg(std::ostream& os, const Chart& chart) {
  constexpr double W = 640, H = 420, L = 70, R = 170, T = 40, B = 60;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const ChartSeries& s : chart.series) {
    if (s.x.size() != s.y.size() || (!s.err.empty() && s.err.size() != s.y.size())) {
      throw std::invalid_argument("write_svg: series '" + s.label + "' has mismatched lengths");
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      const double e = s.err.empty() ? 0.0 : std::abs(s.err[i]);
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i] - e);
      y1 = std::max(y1, s.y[i] + e);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x0 -= 0.5, x1 += 0.5;
  y0 = std::min(y0, 0.0);
  if (y1 <= y0) y1 = y0 + 1.0;
  const double pad = 0.05 * (y1 - y0);
  y1 += pad;
  if (y0 < 0.0) y0 -= pad;

  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  os << std::fixed << std::setprecision(2);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" viewBox=\"0 0 " << W << ' ' << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << xml_escape(chart.title) << "</text>\n";
  os << "<g class=\"axes\" stroke=\"black\">\n";
  os << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\"/>\n";
  os << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\"/>\n";
  os << "</g>\n<g class=\"ticks\">\n";
  std::ostringstream label;
  for (double t : nice_ticks(x0, x1)) {
    os << "<line x1=\"" << px(t) << "\" y1=\"" << H - B << "\" x2=\"" << px(t) << "\" y2=\"" << H - B + 5
       << "\" stroke=\"black\"/>";
    os << "<text x=\"" << px(t) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">"
       << format_number(t) << "</text>\n";
  }
  for (double t : nice_ticks(y0, y1)) {
    os << "<line x1=\"" << L - 5 << "\" y1=\"" << py(t) << "\" x2=\"" << L << "\" y2=\"" << py(t)
       << "\" stroke=\"black\"/>";
    os << "<text x=\"" << L - 8 << "\" y=\"" << py(t) + 4 << "\" text-anchor=\"end\">"
       << format_number(t) << "</text>\n";
  }
  os << "</g>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15 << "\" text-anchor=\"middle\">"
     << xml_escape(chart.x_label) << "</text>\n";
  os << "<text transform=\"translate(18," << (T + H - B) / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << xml_escape(chart.y_label) << "</text>\n";

  std::size_t color = 0;
  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const ChartSeries& s = chart.series[si];
    const std::string stroke = s.truth ? "black" : kPalette[color++ % std::size(kPalette)];
    os << "<polyline class=\"" << (s.truth ? "truth" : "estimate") << "\" fill=\"none\" stroke=\"" << stroke
       << "\" stroke-width=\"2\"" << (s.truth ? " stroke-dasharray=\"6,4\"" : "") << " points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      os << (first ? "" : " ") << px(s.x[i]) << ',' << py(s.y[i]);
      first = false;
    }
    os << "\"/>\n";
    if (!s.err.empty()) {
      os << "<g class=\"errorbars\" stroke=\"" << stroke << "\">";
      for (std::size_t i = 0; i < s.x.size(); ++i) {
        if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i]) || !std::isfinite(s.err[i])) continue;
        const double x = px(s.x[i]), lo = py(s.y[i] - s.err[i]), hi = py(s.y[i] + s.err[i]);
        os << "<line x1=\"" << x << "\" y1=\"" << lo << "\" x2=\"" << x << "\" y2=\"" << hi << "\"/>"
           << "<line x1=\"" << x - 4 << "\" y1=\"" << lo << "\" x2=\"" << x + 4 << "\" y2=\"" << lo << "\"/>"
           << "<line x1=\"" << x - 4 << "\" y1=\"" << hi << "\" x2=\"" << x + 4 << "\" y2=\"" << hi << "\"/>";
      }
      os << "</g>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(si);
    os << "<line x1=\"" << W - R + 12 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 36 << "\" y2=\"" << ly
       << "\" stroke=\"" << stroke << "\" stroke-width=\"2\"" << (s.truth ? " stroke-dasharray=\"6,4\"" : "")
       << "/>";
    os << "<text x=\"" << W - R + 42 << "\" y=\"" << ly + 4 << "\">" << xml_escape(s.label) << "</text>\n";
  }
  os << "</svg>\n";
}

void write_svg(const std::filesystem::path& path, const Chart& chart) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  write_svg(out, chart);
  if (!out) throw IoError("write failed for " + path.string());
}

// ---------------------------------------------------------------- Santa Fe

SantaFeColumns parse_santa_fe_columns(const std::string& spec) {
  const auto parts = split(spec, ',');
  if (parts.size() != 3) throw std::invalid_argument("column map must look like 'h,r,o'");
  int c[3];
  for (int i = 0; i < 3; ++i) {
    c[i] = static_cast<int>(to_integer("columns", trim(parts[static_cast<std::size_t>(i)])));
    if (c[i] < 0) throw std::invalid_argument("column indices must be nonnegative");
  }
  if (c[0] == c[1] || c[0] == c[2] || c[1] == c[2]) {
    throw std::invalid_argument("column indices must be distinct");
  }
  return {c[0], c[1], c[2]};
}

SantaFeSeries load_santa_fe(std::istream& is, const SantaFeColumns& cols) {
  const int needed = std::max({cols.heart, cols.respiration, cols.oxygen}) + 1;
  std::vector<std::array<double, 3>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::vector<double> vals;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t pos = 0;
        vals.push_back(std::stod(tok, &pos));
        if (pos != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw IoError("santa fe line " + std::to_string(lineno) + ": not a number '" + tok + "'");
      }
    }
    if (static_cast<int>(vals.size()) < needed) {
      throw IoError("santa fe line " + std::to_string(lineno) + ": expected at least " +
                    std::to_string(needed) + " columns");
    }
    rows.push_back({vals[static_cast<std::size_t>(cols.heart)], vals[static_cast<std::size_t>(cols.respiration)],
                    vals[static_cast<std::size_t>(cols.oxygen)]});
  }
  if (static_cast<Eigen::Index>(rows.size()) < kSantaFeEnd) {
    throw IoError("santa fe file has " + std::to_string(rows.size()) + " rows, need " +
                  std::to_string(kSantaFeEnd));
  }
  const Eigen::Index n = kSantaFeEnd - kSantaFeBegin;
  Eigen::MatrixXd m(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) m(i, c) = rows[static_cast<std::size_t>(kSantaFeBegin + i)][static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < 3; ++c) {
    const double mean = m.col(c).mean();
    m.col(c).array() -= mean;
    const double sd = std::sqrt(m.col(c).squaredNorm() / static_cast<double>(n));
    if (!(sd > 0.0)) throw IoError("santa fe channel " + std::to_string(c) + " is constant on the slice");
    m.col(c) /= sd;
  }
  return {m.col(0), m.col(1), m.col(2)};
}

SantaFeSeries load_santa_fe(const std::filesystem::path& path, const SantaFeColumns& columns) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return load_santa_fe(in, columns);
}

namespace {

std::vector<std::pair<Approach, EstimatorOption>> variants_for(const EstimatorConfig& est, bool all) {
  if (!all) return {{est.approach, est.option}};
  return {{Approach::kConditionalOnly, EstimatorOption::kDirect},
          {Approach::kConditionalOnly, EstimatorOption::kGaussianReference},
          {Approach::kJoint, EstimatorOption::kDirect},
          {Approach::kJoint, EstimatorOption::kGaussianReference}};
}

std::vector<ResultRow> rows_from(const std::vector<SeedOutcome>& outcomes, const ResultRow& proto,
                                 const EstimatorConfig& est, bool all) {
  std::vector<ResultRow> rows;
  for (const auto& [approach, option] : variants_for(est, all)) {
    for (std::size_t s = 0; s < outcomes.size(); ++s) {
      ResultRow r = proto;
      r.variant = variant_name(approach, option);
      r.seed = static_cast<int>(s);
      r.estimate = all ? outcomes[s].variants.get(approach, option) : outcomes[s].value;
      r.wall_seconds = outcomes[s].total_seconds;
      rows.push_back(std::move(r));
    }
  }
  return rows;
}

}  // namespace

std::vector<ResultRow> run_santa_fe(const SantaFeSeries& data, const SantaFeOptions& opt,
                                    const RowSink& sink) {
  if (opt.k_max < 1 || opt.l < 1) throw std::invalid_argument("santafe: lags must be >= 1");
  const TimeSeriesPair pair{data.respiration, data.heart};
  std::vector<ResultRow> all;
  for (int k = 1; k <= opt.k_max; ++k) {
    for (Direction dir : {Direction::kXToY, Direction::kYToX}) {
      PipelineConfig p;
      p.k = k;
      p.l = opt.l;
      p.direction = dir;
      p.estimator = opt.estimator;
      p.train = opt.train;
      p.n_seeds = opt.n_seeds;
      p.base_seed = mix_seed(opt.seed, static_cast<std::uint64_t>(2 * k + (dir == Direction::kXToY ? 0 : 1)));
      p.threads = opt.threads;
      std::vector<SeedOutcome> outcomes;
      transfer_entropy(pair, p, &outcomes);
      ResultRow proto;
      proto.system = "santafe";
      proto.n = static_cast<long long>(pair.length() - std::max(k, opt.l));
      proto.param = k;
      proto.direction = dir == Direction::kXToY ? "resp_to_heart" : "heart_to_resp";
      const auto rows = rows_from(outcomes, proto, opt.estimator, false);
      if (sink) sink(rows);
      all.insert(all.end(), rows.begin(), rows.end());
    }
  }
  return all;
}

// ---------------------------------------------------------------- benchmarks

const std::vector<std::string>& benchmark_suites() {
  static const std::vector<std::string> names{"sample_size", "coupling", "redundant",
                                              "linear_stacking", "halfcube", "cdf"};
  return names;
}

namespace {

SystemSpec default_system(SystemKind kind) {
  SystemSpec s;
  s.kind = kind;
  s.linear.lambda = 0.0;
  s.joint.lambda = 0.5;
  return s;
}

Direction causal_direction(SystemKind kind) {
  return kind == SystemKind::kJoint ? Direction::kXToY : Direction::kYToX;
}

using Transform = TimeSeriesPair (*)(const TimeSeriesPair&);

TimeSeriesPair identity(const TimeSeriesPair& p) { return p; }

std::vector<SweepPlan> stacking_and_coupling(const std::string& tag, Transform f,
                                             const BenchmarkOptions& opt, bool coupling,
                                             bool redundant, bool linear) {
  std::vector<SweepPlan> plans;
  const std::string suffix = tag.empty() ? "" : "_" + tag;
  for (SystemKind kind : {SystemKind::kLinearGaussian, SystemKind::kJoint}) {
    const SystemSpec base = default_system(kind);
    const std::string name = to_string(kind) + suffix;
    if (coupling) {
      SweepPlan p;
      p.figure = "coupling_" + name;
      p.x_label = "lambda";
      p.system = base;
      p.system_name = name;
      for (int i = 0; i < 9; ++i) p.values.push_back(i / 8.0);
      p.directions = {causal_direction(kind)};
      p.n_samples = opt.n_samples;
      p.make = [base, f](double v, Eigen::Index t_len, Rng& rng) {
        SystemSpec s = base;
        s.set_lambda(v);
        return f(s.generate(t_len, rng));
      };
      p.truth = [base](double v, Direction dir) -> std::optional<double> {
        SystemSpec s = base;
        s.set_lambda(v);
        return s.truth(dir);
      };
      plans.push_back(std::move(p));
    }
    if (redundant) {
      SweepPlan p;
      p.figure = "redundant_" + name;
      p.x_label = "redundant dimensions d";
      p.system = base;
      p.system_name = name + "_redundant";
      p.values = {0, 1, 2, 4};
      p.directions = {causal_direction(kind)};
      p.n_samples = opt.n_samples;
      p.make = [base, f](double v, Eigen::Index t_len, Rng& rng) {
        const TimeSeriesPair raw = base.generate(t_len, rng);
        return f(stack_redundant(raw, static_cast<int>(v), rng));
      };
      p.truth = [base](double, Direction dir) -> std::optional<double> { return base.truth(dir); };
      plans.push_back(std::move(p));
    }
    if (linear) {
      SweepPlan p;
      p.figure = "linear_stacking_" + name;
      p.x_label = "stacked copies d";
      p.system = base;
      p.system_name = name + "_stacked";
      p.values = {1, 2, 3};
      p.directions = {causal_direction(kind)};
      p.n_samples = opt.n_samples;
      p.make = [base, f](double v, Eigen::Index t_len, Rng& rng) {
        return f(stack_linear(base, static_cast<int>(v), t_len, rng).pair);
      };
      p.truth = [base](double v, Direction dir) -> std::optional<double> { return v * base.truth(dir); };
      plans.push_back(std::move(p));
    }
  }
  return plans;
}

}  // namespace

std::vector<SweepPlan> plan_suite(const std::string& suite, const BenchmarkOptions& opt) {
  if (suite == "sample_size") {
    std::vector<SweepPlan> plans;
    for (SystemKind kind : {SystemKind::kLinearGaussian, SystemKind::kJoint}) {
      SweepPlan p;
      const SystemSpec base = default_system(kind);
      p.figure = "sample_size_" + to_string(kind);
      p.x_label = "sample size N";
      p.system = base;
      p.system_name = to_string(kind);
      p.values = {500, 1000, 5000, 10000};
      p.directions = {Direction::kXToY, Direction::kYToX};
      p.sweeps_samples = true;
      p.make = [base](double, Eigen::Index t_len, Rng& rng) { return base.generate(t_len, rng); };
      p.truth = [base](double, Direction dir) -> std::optional<double> { return base.truth(dir); };
      plans.push_back(std::move(p));
    }
    return plans;
  }
  if (suite == "coupling") return stacking_and_coupling("", &identity, opt, true, false, false);
  if (suite == "redundant") return stacking_and_coupling("", &identity, opt, false, true, false);
  if (suite == "linear_stacking") return stacking_and_coupling("", &identity, opt, false, false, true);
  if (suite == "halfcube") return stacking_and_coupling("halfcube", &transform_half_cube, opt, true, true, true);
  if (suite == "cdf") return stacking_and_coupling("cdf", &transform_gauss_cdf, opt, true, true, true);
  throw std::invalid_argument("unknown benchmark suite '" + suite + "'");
}

std::vector<ResultRow> run_sweep(const SweepPlan& plan, const BenchmarkOptions& opt, const RowSink& sink) {
  if (!plan.make) throw std::invalid_argument("run_sweep: plan has no generator");
  const std::uint64_t plan_seed = mix_seed(opt.seed, name_hash(plan.figure));
  std::vector<ResultRow> all;
  for (std::size_t vi = 0; vi < plan.values.size(); ++vi) {
    const double v = plan.values[vi];
    const Eigen::Index n = plan.sweeps_samples ? static_cast<Eigen::Index>(v) : plan.n_samples;
    for (Direction dir : plan.directions) {
      PipelineConfig p;
      p.direction = dir;
      p.estimator = opt.estimator;
      p.train = opt.train;
      p.n_seeds = opt.n_seeds;
      p.base_seed = mix_seed(plan_seed, 2 * vi + (dir == Direction::kXToY ? 0 : 1));
      p.threads = opt.threads;
      p.all_variants = opt.all_variants;
      const std::uint64_t data_seed = p.base_seed;
      const Eigen::Index t_len = n + std::max(p.k, p.l);
      auto source = [&plan, v, t_len, data_seed](int s) {
        Rng rng(mix_seed(data_seed, 1000 + static_cast<std::uint64_t>(s)));
        return plan.make(v, t_len, rng);
      };
      std::vector<SeedOutcome> outcomes;
      transfer_entropy(source, p, &outcomes);
      ResultRow proto;
      proto.system = plan.system_name;
      proto.n = static_cast<long long>(n);
      proto.param = v;
      proto.direction = to_string(dir);
      if (plan.truth) proto.truth = plan.truth(v, dir);
      const auto rows = rows_from(outcomes, proto, opt.estimator, opt.all_variants);
      if (sink) sink(rows);
      all.insert(all.end(), rows.begin(), rows.end());
    }
  }
  return all;
}

Chart sweep_chart(const SweepPlan& plan, const std::vector<ResultRow>& rows) {
  Chart c;
  c.title = plan.figure;
  c.x_label = plan.x_label;
  c.y_label = "TE (nats)";
  const auto summary = summarize_rows(rows);
  for (Direction dir : plan.directions) {
    const std::string d = to_string(dir);
    std::vector<std::string> variants;
    for (const auto& s : summary) {
      if (s.direction == d && std::find(variants.begin(), variants.end(), s.variant) == variants.end()) {
        variants.push_back(s.variant);
      }
    }
    for (const std::string& var : variants) {
      ChartSeries series;
      series.label = var + " " + d;
      for (const auto& s : summary) {
        if (s.direction != d || s.variant != var) continue;
        series.x.push_back(plan.sweeps_samples ? static_cast<double>(s.n) : s.param);
        series.y.push_back(s.mean);
        series.err.push_back(s.std_dev);
      }
      c.series.push_back(std::move(series));
    }
  }
  // One truth curve per chart; with two directions it is the causal one.
  if (plan.truth && !plan.directions.empty()) {
    const Direction dir = plan.directions.size() == 1 ? plan.directions[0] : causal_direction(plan.system.kind);
    ChartSeries truth;
    truth.label = "truth " + to_string(dir);
    truth.truth = true;
    for (double v : plan.values) {
      if (const auto t = plan.truth(v, dir)) {
        truth.x.push_back(v);
        truth.y.push_back(*t);
      }
    }
    if (!truth.x.empty()) c.series.push_back(std::move(truth));
  }
  return c;
}

}  // namespace tende
