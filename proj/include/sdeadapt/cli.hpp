#pragma once

#include "sdeadapt/experiment.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sdeadapt::cli {

enum class Command { Simulate, Rmse, Convergence, Table1, ProbeDivergence, Selftest };

struct RunConfig {
  Command command = Command::Rmse;
  std::string problem = "ginzburg-landau";
  std::string scheme = "ats-tem";
  /// A single value or a strictly decreasing ladder.
  std::vector<double> delta_max;
  std::optional<double> delta_min;
  std::optional<double> gamma;
  std::optional<double> K;
  std::optional<std::size_t> paths;
  std::optional<double> horizon;
  std::uint64_t seed = 42;
  /// "auto", "closed-form", "as-bem" or "as-bem:<step>".
  std::string reference = "auto";
  /// Empty writes to stdout.
  std::string output;
  /// 0 means hardware concurrency.
  unsigned threads = 1;
  std::optional<double> x0;
  /// Fixed-step scheme for probe-divergence.
  std::optional<double> step;
  bool match_adaptive_step = false;
  /// Put measured runtimes in the runtime_seconds column (makes the body
  /// nondeterministic); otherwise they only appear in comments.
  bool timing = false;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Exact dyadic "2^-k" / "2^k", or a decimal literal. Throws std::invalid_argument.
double parse_step(const std::string& text);

/// "a..b" with both ends dyadic expands to every power of two in between;
/// "a,b,c" lists values; a single value gives a one-element ladder. The
/// result is sorted strictly decreasing; duplicates are rejected.
std::vector<double> parse_ladder(const std::string& text);

/// Formats with 17 significant digits ("nan", "inf" for non-finite values).
std::string format_number(double value);

inline constexpr const char* kCsvHeader =
    "scheme,problem,delta_max,delta_min,gamma,K,paths,horizon,seed,rmse,rmse_stderr,"
    "mean_step,backstop_fraction,diverged_fraction,runtime_seconds";

struct CsvMetadata {
  /// Emitted as "# key: value" lines before the header.
  std::vector<std::pair<std::string, std::string>> entries;
  /// Emitted as "# note: ..." lines after the rows.
  std::vector<std::string> notes;
};

/// Header, one line per row, then the fit as trailing comments when given.
void emit_csv(std::ostream& out, const std::vector<RmseRow>& rows, const CsvMetadata& meta,
              const LinearFit* fit = nullptr, bool timing = false);

/// Writes to `path`; throws IoError when the file cannot be written.
void emit_csv(const std::string& path, const std::vector<RmseRow>& rows, const CsvMetadata& meta,
              const LinearFit* fit = nullptr, bool timing = false);

/// Exit codes: 0 success, 1 selftest failure, 2 usage or invalid numeric
/// input, 3 IO failure, 4 numeric failure during a run.
int parse_and_dispatch(int argc, const char* const* argv);

/// Same, with explicit streams (stdout used when --out is absent).
int parse_and_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Executes an already parsed configuration.
int dispatch(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace sdeadapt::cli
