#include "qdoor/circuit_io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace qdoor {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

int parse_int(const std::string& s, const std::string& what, int line_no) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) {
    throw FormatError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  }
  return v;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw FormatError("cannot format double");
  return std::string(buf, p);
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto* end = t.data() + t.size();
  auto [p, ec] = std::from_chars(t.data(), end, v);
  if (t.empty() || ec != std::errc() || p != end) throw FormatError("bad number '" + s + "'");
  return v;
}

void write_circuit(std::ostream& os, const Circuit& c) {
  os << "qubits=" << c.n_qubits() << " params=" << c.n_params() << '\n';
  for (const auto& g : c.gates()) {
    os << gate_name(g.kind) << ' ';
    for (std::size_t i = 0; i < g.qubits.size(); ++i) os << (i ? "," : "") << g.qubits[i];
    os << " |";
    for (int s : g.param_slots) os << " slot:" << s;
    os << " |";
    for (double v : g.fixed_params) os << " fixed:" << format_double(v);
    os << '\n';
  }
}

std::string write_circuit(const Circuit& c) {
  std::ostringstream os;
  write_circuit(os, c);
  return os.str();
}

Circuit read_circuit(std::istream& is) {
  std::string line;
  int line_no = 0;
  bool have_header = false;
  Circuit c;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (!have_header) {
      std::istringstream hs(t);
      std::string a, b, extra;
      hs >> a >> b;
      if (a.rfind("qubits=", 0) != 0 || b.rfind("params=", 0) != 0 || (hs >> extra)) {
        throw FormatError("line " + std::to_string(line_no) +
                          ": expected header 'qubits=<n> params=<m>'");
      }
      c = Circuit(parse_int(a.substr(7), "qubit count", line_no),
                  parse_int(b.substr(7), "parameter count", line_no));
      have_header = true;
      continue;
    }
    const auto bar1 = t.find('|');
    const auto bar2 = bar1 == std::string::npos ? bar1 : t.find('|', bar1 + 1);
    if (bar2 == std::string::npos || t.find('|', bar2 + 1) != std::string::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected two '|' separators");
    }
    std::istringstream head(t.substr(0, bar1));
    std::string kind_s, qubits_s, extra;
    head >> kind_s >> qubits_s;
    if (kind_s.empty() || qubits_s.empty() || (head >> extra)) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 'KIND q0[,q1[,q2]]'");
    }
    const auto kind = parse_gate_kind(kind_s);
    if (!kind) throw FormatError("line " + std::to_string(line_no) + ": unknown gate '" + kind_s + "'");
    GateSpec g;
    g.kind = *kind;
    std::istringstream qs(qubits_s);
    for (std::string q; std::getline(qs, q, ',');) g.qubits.push_back(parse_int(q, "qubit", line_no));

    std::istringstream slots(t.substr(bar1 + 1, bar2 - bar1 - 1));
    for (std::string tok; slots >> tok;) {
      if (tok.rfind("slot:", 0) != 0) {
        throw FormatError("line " + std::to_string(line_no) + ": expected slot:<i>, got '" + tok + "'");
      }
      g.param_slots.push_back(parse_int(tok.substr(5), "slot", line_no));
    }
    std::istringstream fixed(t.substr(bar2 + 1));
    for (std::string tok; fixed >> tok;) {
      if (tok.rfind("fixed:", 0) != 0) {
        throw FormatError("line " + std::to_string(line_no) + ": expected fixed:<radians>, got '" + tok + "'");
      }
      try {
        g.fixed_params.push_back(parse_double(tok.substr(6)));
      } catch (const FormatError&) {
        throw FormatError("line " + std::to_string(line_no) + ": bad angle '" + tok + "'");
      }
    }
    try {
      c.add(std::move(g));
    } catch (const CircuitError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw FormatError("missing 'qubits=<n> params=<m>' header");
  return c;
}

Circuit parse_circuit(const std::string& text) {
  std::istringstream is(text);
  return read_circuit(is);
}

}  // namespace qdoor
