#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "efdrcs/covariance.hpp"
#include "efdrcs/grid.hpp"
#include "efdrcs/harness.hpp"
#include "efdrcs/pipeline.hpp"

namespace efdrcs {

/// Grid CSV: a header line `n1,n2`, then n1 rows of n2 values. `NA` marks an
/// unobserved cell; the returned grid then carries a mask and holds 0 there.
Grid2D parse_grid_csv(std::string_view text);
std::string grid_csv(const Grid2D& grid);

/// Scheme JSON: {"n1": .., "n2": .., "blocks": [[pixel, ...], ...]}.
AggregationScheme parse_scheme_json(std::string_view text);
std::string scheme_json(const AggregationScheme& scheme);

/// Aggregated observations: {"scheme": <scheme>, "values": [...]}.
AggregatedData parse_aggregated_json(std::string_view text);
std::string aggregated_json(const AggregatedData& data);

std::string covariance_json(const FittedCovariance& fit);
FittedCovariance parse_covariance_json(std::string_view text);

/// Stage timings vary from run to run, so they are left out unless asked for.
std::string report_json(const DetectionReport& report, bool with_times = false);

/// Manifests list every cell of a study lattice together with its seeds.
std::string power_manifest_json(const std::vector<StudyCell>& cells, const StudyOptions& options,
                                std::string_view kind);
std::string type1_manifest_json(const Type1Options& options);

std::string read_text(const std::filesystem::path& path);
/// Writes to a temporary file in the same directory, then renames it over `path`.
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace efdrcs
