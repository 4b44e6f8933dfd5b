#pragma once

// Long-format CSV for grouped time series:
//
//   series_id,replicate_id,time,value
//
// One row per observation. replicate_id may be empty. Every series must be
// observed at the same set of (replicate, time) points.

#include "dpgp/hgp.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace dpgp {

inline constexpr const char* kDatasetHeader = "series_id,replicate_id,time,value";
inline constexpr const char* kReplicateLevel = "replicate";

// Series keep their first-appearance order; points are sorted by
// (replicate_id, time). A "replicate" level is added when any replicate_id
// is non-empty. Errors name the line or the offending series.
GroupedDataset ingest(std::istream& in, const std::string& source = "<csv>");
GroupedDataset ingest(const std::filesystem::path& path);

void emit(std::ostream& out, const GroupedDataset& data);
void emit(const std::filesystem::path& path, const GroupedDataset& data);

// group_id,true_cluster
void write_labels(const std::filesystem::path& path, const std::vector<std::string>& names,
                  const std::vector<int>& labels, const std::string& column = "true_cluster");
std::vector<int> read_labels(const std::filesystem::path& path);

// Splits one CSV line on commas. Quoted fields are not supported.
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace dpgp
