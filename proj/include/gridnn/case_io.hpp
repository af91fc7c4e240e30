#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gridnn/grid.hpp"

namespace gridnn {

enum class CaseFormat { native_json, matpower_subset };

struct ParseResult {
  Network net;
  std::optional<PFState> anchor;  // stored voltage solution, when the file has one
  std::vector<std::string> warnings;
};

/// Parses case text. The MATPOWER subset reads the bus/branch/gen/gencost
/// tables, merges generators per bus into aggregate injection bounds and
/// linear costs, and records dropped information (quadratic cost terms,
/// phase shifts, ...) as warnings.
ParseResult parse_case(const std::string& text, CaseFormat format);

/// Native JSON serialization (field names match the in-memory types; the
/// optional "anchor" object carries a stored voltage solution).
std::string to_native_json(const Network& net,
                           const std::optional<PFState>& anchor = std::nullopt);

/// native_json for *.json, matpower_subset for *.m.
CaseFormat format_from_path(const std::string& path);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace gridnn
