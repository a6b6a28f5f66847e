#pragma once

#include "lmminfer/model.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace lmminfer {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Throws Schema when the column is absent.
  int column(const std::string& name) const;
};

// Comma-separated, header row required. Double-quoted fields may contain
// commas and doubled quotes. Throws Schema on ragged rows.
CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

// 17 significant digits, '.' decimal point regardless of locale.
std::string format_double(double v);
// Throws Schema on anything that is not a complete decimal number.
double parse_double(const std::string& s);

struct CsvLayout {
  std::string group_col = "group";
  std::string y_col = "y";
  std::vector<std::string> test_cols;     // become Z, in this order
  std::vector<std::string> random_cols;   // empty: random intercept
};

// Rows are regrouped by first appearance of their group key; within a group
// the file order is kept. Every numeric column other than group, y and the
// tested ones goes into X. Random-effect columns stay in X as well.
GroupedDataset dataset_from_csv(const CsvTable& table, const CsvLayout& layout);

// Writes group, y, then the Z columns and the X columns under their names
// (x_names / z_names, or generated ones). Group keys are g1 .. gN.
void write_dataset_csv(std::ostream& out, const GroupedDataset& data);

// Same layout for a full design matrix with columns x1 .. xp.
void write_design_csv(std::ostream& out, const VectorXd& y, const MatrixXd& design, const std::vector<int>& groups);

}  // namespace lmminfer
