#pragma once

#include <cmath>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "moverstayer/data.hpp"
#include "moverstayer/numeric.hpp"
#include "moverstayer/simulate.hpp"

namespace moverstayer {

// Long-format panel CSV: one row per subject and time,
//   id,t,y,delta,x_1..x_d,z_1..z_q
// Rows of a subject are contiguous and cover t = 0..y in order. Lines
// starting with '#' are comments.

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

// Column layout recovered from the header.
struct PanelHeader {
  Eigen::Index d = 0;
  Eigen::Index q = 0;
};

inline PanelHeader parse_header(const std::vector<std::string_view>& cols,
                                std::size_t row) {
  const char* fixed[] = {"id", "t", "y", "delta"};
  if (cols.size() < 4)
    throw DataError(DataError::Code::bad_header,
                    "header must start with id,t,y,delta", row);
  for (std::size_t k = 0; k < 4; ++k)
    if (trim(cols[k]) != fixed[k])
      throw DataError(DataError::Code::bad_header,
                      "expected column '" + std::string(fixed[k]) +
                          "', found '" + std::string(trim(cols[k])) + "'",
                      row);
  PanelHeader h;
  std::size_t k = 4;
  while (k < cols.size() && trim(cols[k]) == "x_" + std::to_string(h.d + 1)) {
    ++h.d;
    ++k;
  }
  while (k < cols.size() && trim(cols[k]) == "z_" + std::to_string(h.q + 1)) {
    ++h.q;
    ++k;
  }
  if (k != cols.size())
    throw DataError(DataError::Code::bad_header,
                    "unexpected column '" + std::string(trim(cols[k])) +
                        "'; covariates must be named x_1..x_d then z_1..z_q",
                    row);
  return h;
}

}  // namespace detail

inline PanelDataset read_panel_csv(std::istream& in) {
  using Code = DataError::Code;
  std::string line;
  std::size_t row = 0;
  std::optional<detail::PanelHeader> header;
  std::vector<Subject> subjects;
  std::unordered_set<std::string> finished;
  std::size_t subject_first_row = 0;

  auto close_subject = [&]() {
    if (subjects.empty()) return;
    const auto& s = subjects.back();
    if (s.z.rows() != s.y + 1)
      throw DataError(Code::missing_time,
                      "has rows for t = 0.." + std::to_string(s.z.rows() - 1) +
                          " but y = " + std::to_string(s.y) +
                          "; missing t = " + std::to_string(s.z.rows()),
                      subject_first_row, s.id);
    finished.insert(s.id);
  };

  std::vector<double> zrow;
  while (std::getline(in, line)) {
    ++row;
    const auto view = detail::trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cols = detail::split_csv_line(view);
    if (!header) {
      header = detail::parse_header(cols, row);
      continue;
    }
    const auto d = header->d;
    const auto q = header->q;
    const auto expected = static_cast<std::size_t>(4 + d + q);
    if (cols.size() != expected)
      throw DataError(Code::ragged_row,
                      "expected " + std::to_string(expected) +
                          " columns, found " + std::to_string(cols.size()),
                      row);
    const std::string id(detail::trim(cols[0]));
    if (id.empty()) throw DataError(Code::bad_number, "empty subject id", row);
    auto integer = [&](std::size_t k, const char* name) {
      long long v = 0;
      if (!parse_int(detail::trim(cols[k]), v))
        throw DataError(Code::bad_number,
                        std::string("column ") + name + ": '" +
                            std::string(detail::trim(cols[k])) +
                            "' is not an integer",
                        row, id);
      return v;
    };
    auto real = [&](std::size_t k) {
      double v = 0.0;
      if (!parse_double(detail::trim(cols[k]), v) || !std::isfinite(v))
        throw DataError(Code::bad_number,
                        "column " + std::to_string(k + 1) + ": '" +
                            std::string(detail::trim(cols[k])) +
                            "' is not a finite number",
                        row, id);
      return v;
    };
    const long long t = integer(1, "t");
    const long long y = integer(2, "y");
    const long long delta = integer(3, "delta");
    if (delta != 0 && delta != 1)
      throw DataError(Code::non_binary_delta,
                      "delta must be 0 or 1, found " + std::to_string(delta),
                      row, id);
    if (y < 0 || y > 1000000)
      throw DataError(Code::bad_number, "y out of range", row, id);
    Vector x(d);
    for (Eigen::Index j = 0; j < d; ++j) x[j] = real(4 + static_cast<std::size_t>(j));
    zrow.resize(static_cast<std::size_t>(q));
    for (Eigen::Index j = 0; j < q; ++j)
      zrow[static_cast<std::size_t>(j)] = real(4 + static_cast<std::size_t>(d + j));

    const bool continues = !subjects.empty() && subjects.back().id == id;
    if (!continues) {
      close_subject();
      if (finished.count(id))
        throw DataError(Code::inconsistent_subject,
                        "rows of the subject are not contiguous", row, id);
      if (t != 0)
        throw DataError(Code::missing_time,
                        "first row has t = " + std::to_string(t) +
                            "; missing t = 0",
                        row, id);
      Subject s;
      s.id = id;
      s.y = static_cast<int>(y);
      s.delta = static_cast<int>(delta);
      s.x = std::move(x);
      s.z.resize(0, q);
      subjects.push_back(std::move(s));
      subject_first_row = row;
    } else {
      auto& s = subjects.back();
      if (y != s.y || delta != s.delta)
        throw DataError(Code::inconsistent_subject,
                        "y/delta differ from the subject's first row", row, id);
      if (x != s.x)
        throw DataError(Code::inconsistent_fixed_covariates,
                        "fixed covariates differ from the subject's first row",
                        row, id);
      if (t != s.z.rows())
        throw DataError(Code::missing_time,
                        "expected t = " + std::to_string(s.z.rows()) +
                            ", found t = " + std::to_string(t) +
                            (t > s.z.rows() ? " (gap)" : ""),
                        row, id);
    }
    auto& s = subjects.back();
    if (t > s.y)
      throw DataError(Code::missing_time,
                      "t = " + std::to_string(t) + " exceeds y = " +
                          std::to_string(s.y),
                      row, id);
    s.z.conservativeResize(s.z.rows() + 1, q);
    for (Eigen::Index j = 0; j < q; ++j)
      s.z(s.z.rows() - 1, j) = zrow[static_cast<std::size_t>(j)];
  }
  if (!header)
    throw DataError(Code::bad_header, "missing header row", row);
  close_subject();
  if (subjects.empty())
    throw DataError(Code::empty_dataset, "no data rows", row);
  return PanelDataset(std::move(subjects), header->d, header->q);
}

inline PanelDataset read_panel_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in)
    throw DataError(DataError::Code::io, "cannot open '" + path + "'");
  return read_panel_csv(in);
}

// Comment lines written before any CSV body.
inline void write_preamble(std::ostream& out,
                           const std::vector<std::string>& lines) {
  for (const auto& l : lines) out << "# " << l << '\n';
}

inline void write_panel_csv(std::ostream& out, const PanelDataset& data,
                            const std::vector<std::string>& preamble = {}) {
  write_preamble(out, preamble);
  out << "id,t,y,delta";
  for (Eigen::Index j = 0; j < data.fixed_dim(); ++j) out << ",x_" << j + 1;
  for (Eigen::Index j = 0; j < data.varying_dim(); ++j) out << ",z_" << j + 1;
  out << '\n';
  std::string fixed;
  for (const auto& s : data.subjects()) {
    fixed.clear();
    for (Eigen::Index j = 0; j < s.x.size(); ++j)
      fixed += ',' + format_double(s.x[j]);
    for (int t = 0; t <= s.y; ++t) {
      out << s.id << ',' << t << ',' << s.y << ',' << s.delta << fixed;
      for (Eigen::Index j = 0; j < s.z.cols(); ++j)
        out << ',' << format_double(s.z(t, j));
      out << '\n';
    }
  }
}

// One row per simulated subject; times are "inf" when the transition never
// happens.
inline void write_latent_csv(std::ostream& out, const PanelDataset& data,
                             const std::vector<LatentTrajectory>& truth,
                             const std::vector<std::string>& preamble = {}) {
  if (truth.size() != data.size())
    throw DimensionError("latent trajectories and dataset are misaligned");
  auto time = [](int v) { return v == kNever ? std::string("inf") : std::to_string(v); };
  write_preamble(out, preamble);
  out << "id,b0,r,event,final_state\n";
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto& tr = truth[i];
    out << data[i].id << ',' << tr.b0 << ',' << time(tr.r) << ','
        << time(tr.event) << ',' << tr.states.back() << '\n';
  }
}

inline void write_occupancy_csv(std::ostream& out,
                                const std::vector<OccupancyRow>& rows,
                                const std::vector<std::string>& preamble = {}) {
  auto opt = [](const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
  };
  write_preamble(out, preamble);
  out << "t,state1,state2,state3,observed_movers,censored\n";
  for (const auto& r : rows)
    out << r.t << ',' << format_double(r.state1) << ','
        << format_double(r.state2) << ',' << format_double(r.state3) << ','
        << opt(r.observed_movers) << ',' << opt(r.censored) << '\n';
}

}  // namespace moverstayer
