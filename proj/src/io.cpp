#include "lmminfer/io.hpp"

#include "lmminfer/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

namespace lmminfer {

namespace {

std::vector<std::string> split_line(const std::string& line, int line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) throw Error(ErrorCode::Schema, "unterminated quote on line " + std::to_string(line_no));
  out.push_back(std::move(cur));
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  throw Error(ErrorCode::Schema, "missing column '" + name + "'");
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_line(line, line_no);
    for (auto& f : fields) f = trim(f);
    if (t.header.empty()) {
      t.header = std::move(fields);
      std::unordered_map<std::string, int> seen;
      for (const auto& h : t.header) {
        if (h.empty()) throw Error(ErrorCode::Schema, "empty column name in header");
        if (seen[h]++) throw Error(ErrorCode::Schema, "duplicate column '" + h + "'");
      }
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw Error(ErrorCode::Schema, "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                         " fields, header has " + std::to_string(t.header.size()));
    }
    t.rows.push_back(std::move(fields));
  }
  if (t.header.empty()) throw Error(ErrorCode::Schema, "no header row");
  return t;
}

CsvTable read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open '" + path + "'");
  return read_csv(in);
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (b != e && *b == '+') ++b;
  const auto res = std::from_chars(b, e, v);
  if (b == e || res.ec != std::errc() || res.ptr != e)
    throw Error(ErrorCode::Schema, "not a number: '" + s + "'");
  return v;
}

GroupedDataset dataset_from_csv(const CsvTable& table, const CsvLayout& layout) {
  if (table.rows.empty()) throw Error(ErrorCode::Schema, "no data rows");
  if (layout.test_cols.empty()) throw Error(ErrorCode::Schema, "no tested column given");
  const int gcol = table.column(layout.group_col);
  const int ycol = table.column(layout.y_col);
  std::vector<int> zcols;
  for (const auto& name : layout.test_cols) {
    const int c = table.column(name);
    if (c == gcol || c == ycol) throw Error(ErrorCode::Schema, "tested column '" + name + "' is the group or response");
    zcols.push_back(c);
  }
  std::vector<int> wcols;
  for (const auto& name : layout.random_cols) {
    const int c = table.column(name);
    if (c == gcol || c == ycol) throw Error(ErrorCode::Schema, "random-effect column '" + name + "' is not a covariate");
    wcols.push_back(c);
  }
  std::vector<int> xcols;
  for (int c = 0; c < static_cast<int>(table.header.size()); ++c) {
    if (c == gcol || c == ycol || std::find(zcols.begin(), zcols.end(), c) != zcols.end()) continue;
    xcols.push_back(c);
  }

  // Regroup by first appearance.
  std::vector<std::string> keys;
  std::unordered_map<std::string, int> key_index;
  std::vector<std::vector<int>> members;
  for (int r = 0; r < static_cast<int>(table.rows.size()); ++r) {
    const std::string& k = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(gcol)];
    if (k.empty()) throw Error(ErrorCode::Schema, "empty group label on data row " + std::to_string(r + 1));
    auto [it, inserted] = key_index.emplace(k, static_cast<int>(keys.size()));
    if (inserted) {
      keys.push_back(k);
      members.emplace_back();
    }
    members[static_cast<std::size_t>(it->second)].push_back(r);
  }

  const int n = static_cast<int>(table.rows.size());
  GroupedDataset d;
  d.y.resize(n);
  d.X.resize(n, static_cast<Eigen::Index>(xcols.size()));
  d.Z.resize(n, static_cast<Eigen::Index>(zcols.size()));
  d.q = wcols.empty() ? 1 : static_cast<int>(wcols.size());
  for (int c : xcols) d.x_names.push_back(table.header[static_cast<std::size_t>(c)]);
  d.z_names = layout.test_cols;

  auto cell = [&](int r, int c) {
    const std::string& s = table.rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    try {
      return parse_double(s);
    } catch (const Error&) {
      throw Error(ErrorCode::Schema, "non-numeric cell '" + s + "' in column '" +
                                         table.header[static_cast<std::size_t>(c)] + "', data row " +
                                         std::to_string(r + 1));
    }
  };

  int row = 0;
  for (const auto& rows : members) {
    const int ni = static_cast<int>(rows.size());
    d.groups.push_back(ni);
    MatrixXd w = wcols.empty() ? MatrixXd::Ones(ni, 1) : MatrixXd(ni, static_cast<Eigen::Index>(wcols.size()));
    for (int k = 0; k < ni; ++k, ++row) {
      const int r = rows[static_cast<std::size_t>(k)];
      d.y(row) = cell(r, ycol);
      for (std::size_t c = 0; c < xcols.size(); ++c) d.X(row, static_cast<Eigen::Index>(c)) = cell(r, xcols[c]);
      for (std::size_t c = 0; c < zcols.size(); ++c) d.Z(row, static_cast<Eigen::Index>(c)) = cell(r, zcols[c]);
      for (std::size_t c = 0; c < wcols.size(); ++c) w(k, static_cast<Eigen::Index>(c)) = cell(r, wcols[c]);
    }
    d.W.push_back(std::move(w));
  }
  d.validate();
  return d;
}

void write_dataset_csv(std::ostream& out, const GroupedDataset& data) {
  data.validate();
  out << "group,y";
  for (Eigen::Index c = 0; c < data.Z.cols(); ++c)
    out << ',' << (static_cast<std::size_t>(c) < data.z_names.size() ? data.z_names[static_cast<std::size_t>(c)]
                                                                     : "z" + std::to_string(c + 1));
  for (Eigen::Index c = 0; c < data.X.cols(); ++c)
    out << ',' << (static_cast<std::size_t>(c) < data.x_names.size() ? data.x_names[static_cast<std::size_t>(c)]
                                                                     : "x" + std::to_string(c + 1));
  out << '\n';
  const auto off = data.offsets();
  for (int g = 0; g < data.num_groups(); ++g) {
    for (int i = off[static_cast<std::size_t>(g)]; i < off[static_cast<std::size_t>(g) + 1]; ++i) {
      out << 'g' << g + 1 << ',' << format_double(data.y(i));
      for (Eigen::Index c = 0; c < data.Z.cols(); ++c) out << ',' << format_double(data.Z(i, c));
      for (Eigen::Index c = 0; c < data.X.cols(); ++c) out << ',' << format_double(data.X(i, c));
      out << '\n';
    }
  }
}

void write_design_csv(std::ostream& out, const VectorXd& y, const MatrixXd& design, const std::vector<int>& groups) {
  out << "group,y";
  for (Eigen::Index c = 0; c < design.cols(); ++c) out << ",x" << c + 1;
  out << '\n';
  int i = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (int k = 0; k < groups[g]; ++k, ++i) {
      out << 'g' << g + 1 << ',' << format_double(y(i));
      for (Eigen::Index c = 0; c < design.cols(); ++c) out << ',' << format_double(design(i, c));
      out << '\n';
    }
  }
}

}  // namespace lmminfer
