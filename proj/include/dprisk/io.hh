#pragma once

// File formats shared by the CLI and the tests. Every writer is deterministic:
// doubles are printed in their shortest round-trip form.

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "dprisk/dpmcmc.hh"
#include "dprisk/loglinear.hh"
#include "dprisk/risk.hh"
#include "dprisk/selection.hh"
#include "dprisk/table.hh"

namespace dprisk::io {

using Json = nlohmann::ordered_json;

inline constexpr const char* kTableFormat = "dprisk-table-1";

// `<prefix>.csv` holds one row per cell with f > 0, F > 0 or a structural
// zero: per-variable level-index columns, `f`, then `F` and `structural_zero`
// when relevant. `<prefix>.json` holds pi, the variables and their levels.
void write_table(const ContingencyTable& table, const std::string& prefix);
ContingencyTable read_table(const std::string& prefix);

void write_table_csv(const ContingencyTable& table, std::ostream& out);
Json table_metadata(const ContingencyTable& table);
ContingencyTable read_table_streams(const Json& metadata, std::istream& csv);

// Header of variable names, one structural cell per row given by level labels.
void apply_structural_zero_mask(ContingencyTable& table, std::istream& in);

Json to_json(const SamplerConfig& config);
// Only the keys present are applied; unknown keys raise InputError.
void apply_json(SamplerConfig& config, const Json& j);

Json to_json(const MLFit& fit, const ModelSpec& spec);
Json to_json(const C0PathResult& path);

// Draws CSV: header `cell_<k>` per tracked cell, one row per retained draw.
void write_draws_csv(const PosteriorDraws& draws, std::ostream& out);
// Reads lambda columns and cell ids; other fields stay default.
PosteriorDraws read_draws_csv(std::istream& in);
Json diagnostics_json(const PosteriorDraws& draws);
// Posterior mean rate of every non-structural cell, keyed by multi-index.
void write_lambda_mean_csv(const PosteriorDraws& draws,
                           const ContingencyTable& table, std::ostream& out);

Json to_json(const RiskReport& report);
void write_per_cell_csv(const RiskReport& report, const ContingencyTable& table,
                        std::ostream& out);
// Long format: measure,level,value.
void write_quantiles_csv(const RiskReport& report, std::ostream& out);

Json to_json(const SelectionRun& run, const std::vector<RankingRow>& ranking);
// Fixed-width table with estimates, criteria and ranks per model.
std::string selection_table(const SelectionRun& run,
                            const std::vector<RankingRow>& ranking);

std::string format_double(double x);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);
Json read_json_file(const std::string& path);

}  // namespace dprisk::io
