#pragma once

// Command-line plumbing: manifest ingestion, report serialization and the
// weights / sequential / simlab commands.
//
// Exit codes: 0 success, 2 validation or usage error, 3 solver did not
// converge (the report is still written).

#include "stackd/psis.hpp"
#include "stackd/weights.hpp"

#include <json.hpp>

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace stackd::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 2;
inline constexpr int kExitNotConverged = 3;
inline constexpr int kSchemaVersion = 1;

const char* version();

enum class InputFormat { csv, ndjson, density_csv };

struct ModelEntry {
  std::string model_id;
  std::filesystem::path path;
  InputFormat format = InputFormat::csv;
  std::filesystem::path r_eff_path;  // empty: r_eff = 1
};

/// Manifest JSON:
///   {"models": [{"model_id": "a", "path": "a.csv", "format": "csv",
///                "r_eff_path": "a_reff.txt"}, ...],
///    "n_obs": 50, "time_ordered": false, "groups": [...]}
/// Relative paths resolve against the manifest's directory. density_csv
/// files hold one pointwise log density per line (-inf allowed).
struct Manifest {
  std::vector<ModelEntry> models;
  std::size_t n_obs = 0;
  bool time_ordered = false;
  std::vector<std::string> groups;
};

Manifest read_manifest(const std::filesystem::path& path);

/// Draw-matrix readers. CSV: rows are draws, columns observations, comma
/// separated, optional header line. NDJSON: one {"draw": s, "loglik": [...]}
/// record per line; rows are ordered by draw. Errors name the file and the
/// offending line, or the row and column of a non-finite value.
Eigen::MatrixXd read_draws_csv(const std::filesystem::path& path, bool header);
Eigen::MatrixXd read_draws_ndjson(const std::filesystem::path& path);
std::vector<double> read_column(const std::filesystem::path& path, bool allow_neg_inf);

/// Either every model supplies draws or every model supplies densities.
struct ModelSet {
  std::vector<psis::LogLikDrawMatrix> draws;
  weights::LooDensityMatrix densities;  // filled only for density input
  bool has_draws() const { return !draws.empty(); }
};

ModelSet ingest(const Manifest& m, bool header);

/// JSON with every number written at 17 significant digits; non-finite
/// numbers become null.
std::string dump_json(const nlohmann::ordered_json& j);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stackd::cli
