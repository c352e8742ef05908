#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "choicealign/model.hpp"
#include "choicealign/persona.hpp"

namespace choicealign {

/// Repairs applied while turning an agent's answer into an allocation.
struct RecordFlags {
  bool renormalized = false;
  bool floored = false;

  bool operator==(const RecordFlags&) const = default;
};

/// One respondent (human or simulated decision maker).
struct CleanRecord {
  std::string record_id;
  PersonaRecord persona;
  FeatureVector features;
  std::optional<Allocation> observed;  // absent for feature-only populations
  RecordFlags flags;

  bool operator==(const CleanRecord&) const = default;
};

using Records = std::vector<CleanRecord>;

/// Canonical column order of the cleaned-records CSV.
const std::vector<std::string>& records_csv_columns();

void write_records_csv(std::ostream& out, const Records& records);
std::string records_to_csv(const Records& records);
void save_records_csv(const std::filesystem::path& path, const Records& records);

Records read_records_csv(std::istream& in);
Records load_records_csv(const std::filesystem::path& path);

/// Observed shares of one record; throws Error(kData) if it has no allocation.
std::array<double, kNumActivities> observed_shares(const CleanRecord& r);

}  // namespace choicealign
