#include "qcw/io.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace qcw {

namespace {

using json = nlohmann::ordered_json;

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  return out;
}

template <typename T>
T parse_number(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ParseError(path.string(), line, "expected a number, got '" + std::string(text) + "'");
  return value;
}

// from_chars for double is available on gcc>=11; keep a strtod fallback for floats.
double parse_double(std::string_view text, const std::filesystem::path& path, std::size_t line) {
  std::string buf(text);
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size() || buf.empty())
    throw ParseError(path.string(), line, "expected a real number, got '" + buf + "'");
  return v;
}

/// Splits "key=value" fields of a header comment into a map, preserving order checks upstream.
std::map<std::string, std::string> parse_header_fields(std::string_view rest) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos < rest.size()) {
    while (pos < rest.size() && rest[pos] == ' ') ++pos;
    const std::size_t eq = rest.find('=', pos);
    if (eq == std::string_view::npos) break;
    const std::size_t end = rest.find(' ', eq);
    const std::string key(rest.substr(pos, eq - pos));
    const std::string value(rest.substr(eq + 1, (end == std::string_view::npos ? rest.size() : end) - eq - 1));
    out[key] = value;
    pos = end == std::string_view::npos ? rest.size() : end + 1;
  }
  return out;
}

void split2(std::string_view line, std::string_view& a, std::string_view& b,
            const std::filesystem::path& path, std::size_t lineno) {
  const std::size_t comma = line.find(',');
  if (comma == std::string_view::npos)
    throw ParseError(path.string(), lineno, "expected '<a>,<b>'");
  a = line.substr(0, comma);
  b = line.substr(comma + 1);
}

std::string trim_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(std::numeric_limits<double>::max_digits10);
  os << v;
  return os.str();
}

std::vector<TimestampPs> TagStream::channel_times(std::int32_t channel) const {
  std::vector<TimestampPs> out;
  for (const TimeTag& tag : tags)
    if (tag.channel == channel) out.push_back(tag.t);
  return out;
}

std::optional<std::size_t> Histogram::bin_index(std::int64_t tau_ps) const {
  if (tau_ps < tau_min_ps || tau_ps >= tau_max_ps()) return std::nullopt;
  return static_cast<std::size_t>((tau_ps - tau_min_ps) / bin_width_ps);
}

void validate(const VoigtParams& p) {
  if (p.gamma_hom_ghz < 0.0 || p.gamma_inhom_ghz < 0.0)
    throw DomainError("Voigt widths must be non-negative");
  if (p.gamma_hom_ghz == 0.0 && p.gamma_inhom_ghz == 0.0)
    throw DomainError("degenerate Voigt profile: both widths zero");
}

std::string_view to_string(Transition t) {
  switch (t) {
    case Transition::X: return "X";
    case Transition::XX: return "XX";
    case Transition::Xplus: return "Xplus";
  }
  return "?";
}

std::string_view to_string(Polarization p) {
  return p == Polarization::H ? "H" : "V";
}

std::size_t FitResult::index(std::string_view name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw Error("no fit parameter named '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

TagStream read_tags(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  std::size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header line");
  line = trim_cr(line);
  ++lineno;
  if (line.rfind("# ", 0) != 0) throw ParseError(path.string(), 1, "header must start with '# '");
  const auto fields = parse_header_fields(std::string_view(line).substr(2));
  if (!fields.contains("channels") || !fields.contains("duration_ps"))
    throw ParseError(path.string(), 1, "header must declare channels= and duration_ps=");

  TagStream stream;
  stream.n_channels = parse_number<std::int32_t>(fields.at("channels"), path, 1);
  stream.duration_ps = parse_number<std::int64_t>(fields.at("duration_ps"), path, 1);
  if (stream.n_channels <= 0) throw ParseError(path.string(), 1, "channels must be positive");

  std::vector<TimestampPs> last(static_cast<std::size_t>(stream.n_channels),
                                std::numeric_limits<TimestampPs>::min());
  while (std::getline(in, line)) {
    line = trim_cr(line);
    ++lineno;
    if (line.empty()) continue;
    if (line[0] == '#') continue;  // trailing metadata comments are permitted
    std::string_view a, b;
    split2(line, a, b, path, lineno);
    TimeTag tag;
    tag.channel = parse_number<std::int32_t>(a, path, lineno);
    tag.t = parse_number<std::int64_t>(b, path, lineno);
    if (tag.channel < 0 || tag.channel >= stream.n_channels)
      throw ParseError(path.string(), lineno,
                       "channel " + std::to_string(tag.channel) + " outside declared set [0, " +
                           std::to_string(stream.n_channels) + ")");
    if (tag.t < 0) throw ParseError(path.string(), lineno, "negative timestamp");
    auto& prev = last[static_cast<std::size_t>(tag.channel)];
    if (tag.t < prev)
      throw ParseError(path.string(), lineno,
                       "timestamps not sorted on channel " + std::to_string(tag.channel));
    prev = tag.t;
    stream.tags.push_back(tag);
  }
  return stream;
}

void write_tags(const TagStream& stream, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "# channels=" << stream.n_channels << " duration_ps=" << stream.duration_ps << "\n";
  for (const TimeTag& tag : stream.tags) out << tag.channel << ',' << tag.t << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

Histogram read_histogram(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header line");
  line = trim_cr(line);
  if (line.rfind("# ", 0) != 0) throw ParseError(path.string(), 1, "header must start with '# '");
  const auto fields = parse_header_fields(std::string_view(line).substr(2));
  for (const char* key : {"bin_width_ps", "tau_min_ps", "norm"})
    if (!fields.contains(key))
      throw ParseError(path.string(), 1, std::string("header missing ") + key + "=");

  Histogram hist;
  hist.bin_width_ps = parse_number<std::int64_t>(fields.at("bin_width_ps"), path, 1);
  hist.tau_min_ps = parse_number<std::int64_t>(fields.at("tau_min_ps"), path, 1);
  hist.normalization = parse_double(fields.at("norm"), path, 1);

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    ++lineno;
    if (line.empty()) continue;
    if (line.rfind("# meta", 0) == 0) {
      const auto meta = parse_header_fields(std::string_view(line).substr(7));
      if (meta.contains("events_a")) hist.meta.events_a = parse_number<std::uint64_t>(meta.at("events_a"), path, lineno);
      if (meta.contains("events_b")) hist.meta.events_b = parse_number<std::uint64_t>(meta.at("events_b"), path, lineno);
      if (meta.contains("duration_ps")) hist.meta.duration_ps = parse_number<std::int64_t>(meta.at("duration_ps"), path, lineno);
      if (meta.contains("channel_a")) hist.meta.channel_a = parse_number<std::int32_t>(meta.at("channel_a"), path, lineno);
      if (meta.contains("channel_b")) hist.meta.channel_b = parse_number<std::int32_t>(meta.at("channel_b"), path, lineno);
      if (meta.contains("kind")) hist.meta.kind = meta.at("kind");
      continue;
    }
    if (line[0] == '#') continue;
    const std::size_t c1 = line.find(',');
    const std::size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c2 == std::string::npos)
      throw ParseError(path.string(), lineno, "expected '<tau_ps>,<counts>,<g2>'");
    hist.counts.push_back(parse_number<std::uint64_t>(
        std::string_view(line).substr(c1 + 1, c2 - c1 - 1), path, lineno));
  }
  return hist;
}

void write_histogram(const Histogram& hist, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "# bin_width_ps=" << hist.bin_width_ps << " tau_min_ps=" << hist.tau_min_ps
      << " norm=" << format_double(hist.normalization) << "\n";
  out << "# meta events_a=" << hist.meta.events_a << " events_b=" << hist.meta.events_b
      << " duration_ps=" << hist.meta.duration_ps << " channel_a=" << hist.meta.channel_a
      << " channel_b=" << hist.meta.channel_b;
  if (!hist.meta.kind.empty()) out << " kind=" << hist.meta.kind;
  out << "\n";
  for (std::size_t i = 0; i < hist.counts.size(); ++i) {
    const std::int64_t tau = hist.tau_min_ps + static_cast<std::int64_t>(i) * hist.bin_width_ps +
                             hist.bin_width_ps / 2;
    out << tau << ',' << hist.counts[i] << ',';
    if (hist.normalized())
      out << format_double(static_cast<double>(hist.counts[i]) / hist.normalization);
    else
      out << "nan";
    out << "\n";
  }
  if (!out) throw IoError("write failed: " + path.string());
}

XySeries read_xy(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path.string(), 1, "missing header line");
  line = trim_cr(line);
  if (line.rfind("# ", 0) != 0) throw ParseError(path.string(), 1, "header must start with '# '");
  const auto fields = parse_header_fields(std::string_view(line).substr(2));

  XySeries series;
  if (fields.contains("kind")) series.kind = fields.at("kind");
  if (fields.contains("x")) series.x_label = fields.at("x");
  if (fields.contains("y")) series.y_label = fields.at("y");

  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    line = trim_cr(line);
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::string_view a, b;
    split2(line, a, b, path, lineno);
    series.x.push_back(parse_double(a, path, lineno));
    series.y.push_back(parse_double(b, path, lineno));
  }
  return series;
}

void write_xy(const XySeries& series, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "# kind=" << (series.kind.empty() ? "xy" : series.kind) << " x=" << series.x_label
      << " y=" << series.y_label << "\n";
  for (std::size_t i = 0; i < series.x.size(); ++i)
    out << format_double(series.x[i]) << ',' << format_double(series.y[i]) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

void write_fit(const FitResult& fit, const std::filesystem::path& path,
               const std::string& extras_json) {
  json doc;
  doc["model"] = fit.model;
  json params = json::object();
  for (std::size_t i = 0; i < fit.names.size(); ++i)
    params[fit.names[i]] = {{"value", fit.values[i]}, {"sigma", fit.sigmas[i]}};
  doc["params"] = params;
  const std::size_t n = fit.names.size();
  json cov = json::array();
  for (std::size_t i = 0; i < n; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < n; ++j) row.push_back(fit.covariance[i * n + j]);
    cov.push_back(row);
  }
  doc["covariance"] = cov;
  doc["chi2_red"] = fit.chi2_red;
  doc["iterations"] = fit.iterations;
  doc["converged"] = fit.converged;
  if (!fit.notes.empty()) doc["notes"] = fit.notes;
  if (!extras_json.empty()) {
    const json extras = json::parse(extras_json);
    for (const auto& [key, value] : extras.items()) doc[key] = value;
  }
  std::ofstream out = open_out(path);
  out << doc.dump(2) << "\n";
  if (!out) throw IoError("write failed: " + path.string());
}

FitResult read_fit(const std::filesystem::path& path) {
  std::ifstream in = open_in(path);
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, std::string("invalid JSON: ") + e.what());
  }
  FitResult fit;
  fit.model = doc.value("model", "");
  for (const auto& [name, pv] : doc.at("params").items()) {
    fit.names.push_back(name);
    fit.values.push_back(pv.at("value").get<double>());
    fit.sigmas.push_back(pv.at("sigma").get<double>());
  }
  const std::size_t n = fit.names.size();
  fit.covariance.assign(n * n, 0.0);
  if (doc.contains("covariance")) {
    const auto& cov = doc.at("covariance");
    for (std::size_t i = 0; i < n && i < cov.size(); ++i)
      for (std::size_t j = 0; j < n && j < cov[i].size(); ++j)
        fit.covariance[i * n + j] = cov[i][j].get<double>();
  }
  fit.chi2_red = doc.value("chi2_red", 0.0);
  fit.iterations = doc.value("iterations", 0);
  fit.converged = doc.value("converged", false);
  if (doc.contains("notes"))
    for (const auto& note : doc.at("notes")) fit.notes.push_back(note.get<std::string>());
  return fit;
}

}  // namespace qcw
