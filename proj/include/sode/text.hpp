#pragma once

#include "sode/formula.hpp"

namespace sode {

struct ParseError : SodeError {
    int line = 0, col = 0;
    ParseError(const std::string& msg, int line_, int col_)
        : SodeError(msg + " at " + std::to_string(line_) + ":" + std::to_string(col_)),
          line(line_), col(col_) {}
};

// Textual (.sode) round trip. parse_text(dump_text(F)) is structurally equal to F.
std::string dump_text(const Formula& f);
Formula     parse_text(const std::string& text);

std::string term_to_text(const Formula& f, TermId t);
std::string atom_to_text(const Formula& f, AtomId a);
std::string format_double(double d);

} // namespace sode
