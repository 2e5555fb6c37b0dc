#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "drgmm/models.hpp"

namespace drgmm {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;   // data rows, header excluded
};

// Comma separated, header row required, optional double quotes, CRLF tolerated.
// Ragged rows and empty input raise InputError naming the row.
CsvTable parse_csv(std::istream& in, const std::string& source = "<input>");
CsvTable read_csv(const std::string& path);

// Finite double or InputError naming data row (1-based) and column.
double parse_cell(const std::string& text, std::size_t row, std::size_t col, const std::string& column);

// Factor schema: [date,] R_1..R_{n_assets}, F_1..F_{n_factors}. A leading column
// headed "date" (any case) is skipped; the remaining count must match exactly.
FactorData read_factor_csv(const std::string& path, int n_assets, int n_factors, bool excess = false);

// IV schema: y, X_1..X_m, Z_1..Z_k, W_1..W_p.
IvData read_iv_csv(const std::string& path, int m, int k, int p);

// CRRA schema: C, R_1..R_N. Returns on row t pair with growth C_t / C_{t-1};
// the first row's return cells are unused and may be empty.
struct CrraInputs {
    VectorXd consumption;   // T + 1
    MatrixXd returns;       // T x N
};
CrraInputs read_crra_csv(const std::string& path, int n_assets);

}  // namespace drgmm
