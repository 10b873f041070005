#pragma once

#include <filesystem>
#include <string>

#include "qcw/types.hpp"

// File formats (all plain text, all round-trip exactly):
//
//   tag file         "# channels=<n> duration_ps=<d>"  then  "<channel>,<t_ps>"
//   histogram file   "# bin_width_ps=<w> tau_min_ps=<m> norm=<f>"
//                    optional "# meta ..." line, then "<tau_ps>,<counts>,<g2>"
//   xy series        "# kind=<k> x=<label> y=<label>"  then  "<x>,<y>"
//   fit file         JSON {model, params:{name:{value,sigma}}, covariance,
//                    chi2_red, converged, ...}
//
// Doubles are printed with max_digits10 so write/read is value-exact.

namespace qcw {

/// Reads a tag stream; throws ParseError (with line number) on malformed
/// input or per-channel ordering violations.
TagStream read_tags(const std::filesystem::path& path);
void write_tags(const TagStream& stream, const std::filesystem::path& path);

Histogram read_histogram(const std::filesystem::path& path);
void write_histogram(const Histogram& hist, const std::filesystem::path& path);

XySeries read_xy(const std::filesystem::path& path);
void write_xy(const XySeries& series, const std::filesystem::path& path);

/// Fit JSON. `extras_json` is an optional serialized JSON object merged into
/// the top level (derived quantities, provenance); pass "" for none.
void write_fit(const FitResult& fit, const std::filesystem::path& path,
               const std::string& extras_json = "");
FitResult read_fit(const std::filesystem::path& path);

/// Full-precision double formatting used by every writer.
std::string format_double(double v);

}  // namespace qcw
