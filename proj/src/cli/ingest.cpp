#include "stackd/cli.hpp"
#include "stackd/numeric.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace stackd::cli {

namespace fs = std::filesystem;

namespace {

std::ifstream open_or_throw(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open file: " + path.string());
  return in;
}

[[noreturn]] void fail(ErrorKind kind, const fs::path& path, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << path.string() << ": line " << line << ": " << what;
  throw Error(kind, os.str());
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

/// Parses a numeric cell; "inf", "-inf" and "nan" are accepted here and
/// judged by the caller.
bool parse_double(std::string_view cell, double& v) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  return ec == std::errc() && ptr == cell.data() + cell.size();
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

[[noreturn]] void non_finite(const fs::path& path, std::size_t row, std::size_t col, double v) {
  std::ostringstream os;
  os << path.string() << ": " << (std::isnan(v) ? "NaN" : "infinite value") << " at row " << row << ", column " << col;
  throw Error(ErrorKind::invalid_argument, os.str());
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

InputFormat parse_format(const std::string& s) {
  if (s == "csv") return InputFormat::csv;
  if (s == "ndjson") return InputFormat::ndjson;
  if (s == "density_csv") return InputFormat::density_csv;
  throw Error(ErrorKind::invalid_argument, "manifest: unsupported format '" + s + "'");
}

}  // namespace

Eigen::MatrixXd read_draws_csv(const fs::path& path, bool header) {
  std::ifstream in = open_or_throw(path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool skipped_header = !header;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    const auto cells = split(line);
    if (rows.empty()) {
      width = cells.size();
    } else if (cells.size() != width) {
      std::ostringstream os;
      os << "ragged row: expected " << width << " fields, found " << cells.size();
      fail(ErrorKind::parse, path, line_no, os.str());
    }
    std::vector<double> row(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_double(cells[j], row[j])) {
        fail(ErrorKind::parse, path, line_no, "non-numeric cell in column " + std::to_string(j + 1));
      }
      if (!std::isfinite(row[j])) non_finite(path, rows.size() + 1, j + 1, row[j]);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error(ErrorKind::parse, path.string() + ": no data rows");
  return to_matrix(rows);
}

Eigen::MatrixXd read_draws_ndjson(const fs::path& path) {
  std::ifstream in = open_or_throw(path);
  std::map<long long, std::vector<double>> by_draw;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorKind::parse, path, line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!rec.is_object() || !rec.contains("draw") || !rec.contains("loglik") || !rec["draw"].is_number_integer() ||
        !rec["loglik"].is_array()) {
      fail(ErrorKind::parse, path, line_no, "expected {\"draw\": <int>, \"loglik\": [...]}");
    }
    const long long draw = rec["draw"].get<long long>();
    const auto& arr = rec["loglik"];
    if (by_draw.empty()) {
      width = arr.size();
    } else if (arr.size() != width) {
      std::ostringstream os;
      os << "ragged row: expected " << width << " values, found " << arr.size();
      fail(ErrorKind::parse, path, line_no, os.str());
    }
    std::vector<double> row(arr.size());
    for (std::size_t j = 0; j < arr.size(); ++j) {
      if (arr[j].is_null()) non_finite(path, line_no, j + 1, std::nan(""));
      if (!arr[j].is_number()) fail(ErrorKind::parse, path, line_no, "non-numeric value in column " + std::to_string(j + 1));
      row[j] = arr[j].get<double>();
      if (!std::isfinite(row[j])) non_finite(path, line_no, j + 1, row[j]);
    }
    if (!by_draw.emplace(draw, std::move(row)).second) {
      fail(ErrorKind::parse, path, line_no, "duplicate draw index " + std::to_string(draw));
    }
  }
  if (by_draw.empty()) throw Error(ErrorKind::parse, path.string() + ": no records");
  std::vector<std::vector<double>> rows;
  rows.reserve(by_draw.size());
  for (auto& [draw, row] : by_draw) rows.push_back(std::move(row));
  return to_matrix(rows);
}

std::vector<double> read_column(const fs::path& path, bool allow_neg_inf) {
  std::ifstream in = open_or_throw(path);
  std::vector<double> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    double v = 0.0;
    if (!parse_double(line, v)) fail(ErrorKind::parse, path, line_no, "expected one number");
    const bool ok = std::isfinite(v) || (allow_neg_inf && v == kNegInf);
    if (!ok) non_finite(path, out.size() + 1, 1, v);
    out.push_back(v);
  }
  return out;
}

Manifest read_manifest(const fs::path& path) {
  std::ifstream in = open_or_throw(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": invalid manifest JSON: " + e.what());
  }
  Manifest m;
  const fs::path base = path.parent_path();
  try {
    for (const auto& e : j.at("models")) {
      ModelEntry me;
      me.model_id = e.at("model_id").get<std::string>();
      me.path = base / e.at("path").get<std::string>();
      me.format = parse_format(e.value("format", std::string("csv")));
      if (e.contains("r_eff_path")) me.r_eff_path = base / e.at("r_eff_path").get<std::string>();
      m.models.push_back(std::move(me));
    }
    m.n_obs = j.at("n_obs").get<std::size_t>();
    m.time_ordered = j.value("time_ordered", false);
    if (j.contains("groups")) {
      for (const auto& g : j.at("groups")) m.groups.push_back(g.is_string() ? g.get<std::string>() : g.dump());
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": malformed manifest: " + e.what());
  }

  if (m.models.empty()) throw Error(ErrorKind::invalid_argument, "manifest: no models");
  std::set<std::string> ids, paths;
  for (const auto& me : m.models) {
    if (!ids.insert(me.model_id).second) throw Error(ErrorKind::invalid_argument, "manifest: duplicate model_id " + me.model_id);
    if (!paths.insert(fs::weakly_canonical(me.path).string()).second) {
      throw Error(ErrorKind::invalid_argument, "manifest: duplicate path " + me.path.string());
    }
  }
  const bool density = m.models.front().format == InputFormat::density_csv;
  for (const auto& me : m.models) {
    if ((me.format == InputFormat::density_csv) != density) {
      throw Error(ErrorKind::invalid_argument, "manifest: cannot mix draw matrices and density columns");
    }
  }
  if (m.n_obs == 0) throw Error(ErrorKind::invalid_argument, "manifest: n_obs must be positive");
  if (!m.groups.empty() && m.groups.size() != m.n_obs) {
    throw Error(ErrorKind::dimension_mismatch, "manifest: groups must have n_obs entries");
  }
  return m;
}

ModelSet ingest(const Manifest& m, bool header) {
  ModelSet set;
  const auto check_n = [&](const ModelEntry& me, std::size_t n) {
    if (n != m.n_obs) {
      std::ostringstream os;
      os << me.path.string() << ": " << n << " observations, manifest says " << m.n_obs;
      throw Error(ErrorKind::dimension_mismatch, os.str());
    }
  };
  if (m.models.front().format == InputFormat::density_csv) {
    std::vector<std::vector<double>> cols;
    std::vector<std::string> ids;
    for (const auto& me : m.models) {
      cols.push_back(read_column(me.path, true));
      check_n(me, cols.back().size());
      ids.push_back(me.model_id);
    }
    set.densities = weights::from_columns(cols, ids);
    return set;
  }
  for (const auto& me : m.models) {
    psis::LogLikDrawMatrix d;
    d.model_id = me.model_id;
    d.values = me.format == InputFormat::csv ? read_draws_csv(me.path, header) : read_draws_ndjson(me.path);
    check_n(me, d.observations());
    if (!me.r_eff_path.empty()) {
      d.r_eff = read_column(me.r_eff_path, false);
      check_n(me, d.r_eff.size());
    }
    d.validate();
    set.draws.push_back(std::move(d));
  }
  return set;
}

}  // namespace stackd::cli
