#pragma once

#include <iosfwd>
#include <string>

#include "qdoor/qcore.hpp"

namespace qdoor {

// Text form:
//   qubits=<n> params=<m>
//   KIND q0[,q1[,q2]] | slot:<i> ... | fixed:<radians> ...
// Angles are written in shortest round-trip form, so parse(write(c)) == c.

std::string write_circuit(const Circuit& c);
void write_circuit(std::ostream& os, const Circuit& c);

/// Reads a circuit; blank lines and lines starting with '#' are skipped.
/// Throws FormatError naming the offending line.
Circuit parse_circuit(const std::string& text);
Circuit read_circuit(std::istream& is);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);
/// Strict full-string parse; throws FormatError on garbage.
double parse_double(const std::string& s);

}  // namespace qdoor
