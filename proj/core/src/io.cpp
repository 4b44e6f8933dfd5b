#include "dpgp/io.hpp"

#include "dpgp/config.hpp"
#include "dpgp/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace dpgp {

namespace {

using PointKey = std::pair<std::string, double>;  // (replicate, time)

double parse_field(const std::string& text, const std::string& what, const std::string& where) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  auto [p, ec] = std::from_chars(text.data(), end, v);
  if (text.empty() || ec != std::errc() || p != end || !std::isfinite(v)) {
    throw InputError(where + ": " + what + " is not a finite number: '" + text + "'");
  }
  return v;
}

struct Series {
  std::string name;
  std::map<PointKey, double> points;
};

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

GroupedDataset ingest(std::istream& in, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };
  if (!next_line()) throw InputError(source + ": empty file");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (line != kDatasetHeader) {
    throw InputError(source + ":1: expected header '" + std::string(kDatasetHeader) + "', got '" + line + "'");
  }

  std::vector<Series> series;
  std::map<std::string, std::size_t> index;
  while (next_line()) {
    if (line.empty()) continue;
    const std::string where = source + ":" + std::to_string(line_no);
    if (line.find('"') != std::string::npos) throw InputError(where + ": quoted fields are not supported");
    const auto fields = split_csv_line(line);
    if (fields.size() != 4) {
      throw InputError(where + ": expected 4 fields, got " + std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw InputError(where + ": empty series_id");
    const double t = parse_field(fields[2], "time", where);
    const double y = parse_field(fields[3], "value", where);
    auto [it, inserted] = index.emplace(fields[0], series.size());
    if (inserted) series.push_back({fields[0], {}});
    auto& s = series[it->second];
    if (!s.points.emplace(PointKey{fields[1], t}, y).second) {
      throw InputError(where + ": duplicate observation for series '" + fields[0] + "' at replicate '" + fields[1] +
                       "', time " + fields[2]);
    }
  }
  if (series.empty()) throw InputError(source + ": no data rows");

  const auto& ref = series.front().points;
  std::vector<std::string> offending;
  for (const auto& s : series) {
    bool same = s.points.size() == ref.size();
    if (same) {
      auto a = s.points.begin();
      for (auto b = ref.begin(); b != ref.end(); ++a, ++b) {
        if (a->first != b->first) {
          same = false;
          break;
        }
      }
    }
    if (!same) offending.push_back(s.name);
  }
  if (!offending.empty()) {
    std::string list;
    for (std::size_t i = 0; i < offending.size() && i < 20; ++i) list += (i ? ", " : "") + offending[i];
    if (offending.size() > 20) list += ", ...";
    throw InputError(source + ": " + std::to_string(offending.size()) + " series do not share the design of '" +
                     series.front().name + "': " + list);
  }

  GroupedDataset data;
  std::set<std::string> replicates;
  for (const auto& [key, _] : ref) {
    data.design.times.push_back(key.second);
    replicates.insert(key.first);
  }
  const bool flat = replicates.size() == 1 && replicates.begin()->empty();
  if (!flat) {
    Level rep{kReplicateLevel, {}, {replicates.begin(), replicates.end()}};
    for (const auto& [key, _] : ref) {
      rep.ids.push_back(static_cast<int>(std::distance(replicates.begin(), replicates.find(key.first))));
    }
    data.design.levels.push_back(std::move(rep));
  }
  data.values.resize(static_cast<Eigen::Index>(series.size()), static_cast<Eigen::Index>(ref.size()));
  for (std::size_t n = 0; n < series.size(); ++n) {
    Eigen::Index d = 0;
    for (const auto& [_, y] : series[n].points) data.values(static_cast<Eigen::Index>(n), d++) = y;
    data.names.push_back(series[n].name);
  }
  data.validate();
  return data;
}

GroupedDataset ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open data file " + path.string());
  return ingest(in, path.string());
}

void emit(std::ostream& out, const GroupedDataset& data) {
  data.validate();
  const Level* rep = nullptr;
  for (const auto& l : data.design.levels) {
    if (l.name == kReplicateLevel) rep = &l;
  }
  out << kDatasetHeader << '\n';
  for (Eigen::Index n = 0; n < data.num_groups(); ++n) {
    const std::string name = data.names.empty() ? "g" + std::to_string(n) : data.names[static_cast<std::size_t>(n)];
    for (Eigen::Index d = 0; d < data.dim(); ++d) {
      std::string replicate;
      if (rep) {
        const int id = rep->ids[static_cast<std::size_t>(d)];
        replicate = static_cast<std::size_t>(id) < rep->id_names.size() ? rep->id_names[static_cast<std::size_t>(id)]
                                                                        : std::to_string(id);
      }
      out << name << ',' << replicate << ',' << format_double(data.design.times[static_cast<std::size_t>(d)]) << ','
          << format_double(data.values(n, d)) << '\n';
    }
  }
}

void emit(const std::filesystem::path& path, const GroupedDataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  emit(out, data);
}

void write_labels(const std::filesystem::path& path, const std::vector<std::string>& names,
                  const std::vector<int>& labels, const std::string& column) {
  if (names.size() != labels.size()) throw InputError("write_labels: names and labels differ in length");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << "group_id," << column << '\n';
  for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << ',' << labels[i] << '\n';
}

std::vector<int> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open labels file " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<int> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    int v = 0;
    const auto& f = fields.back();
    auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (fields.size() != 2 || ec != std::errc() || p != f.data() + f.size()) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": malformed label row");
    }
    out.push_back(v);
  }
  return out;
}

}  // namespace dpgp
