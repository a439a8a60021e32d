#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "qfuse/types.hpp"

namespace qfuse {

/// Score files are UTF-8, LF-terminated, comma-separated, one record per
/// line beneath a mandatory header:
///
///   access_id,session,label,channel,device,score,q_template,q_query
///
/// label:   genuine | impostor | unknown
/// channel: face | fp1 | fp2 | fp3
/// device:  fnf1 | xfa1 | fo | xft | unknown
/// score:   decimal, empty when missing
/// q_*:     semicolon-joined decimals, arity fixed per channel (face 14,
///          fingerprint 1); an empty element marks a missing measure and an
///          empty field marks the whole vector missing.
///
/// Decimals are written with 9 significant digits; a parse/write cycle of a
/// written file reproduces it byte for byte.
inline constexpr const char* kScoreFileHeader =
    "access_id,session,label,channel,device,score,q_template,q_query";

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, int line)
        : std::runtime_error("line " + std::to_string(line) + ": " + msg), line(line) {}
    int line;
};

std::vector<ScoreRecord> parse_score_file(const std::string& text);

std::string write_score_file(const std::vector<ScoreRecord>& records);

/// Formats a decimal the way score files do (9 significant digits).
std::string format_score(double value);

std::vector<ScoreRecord> read_score_file(const std::string& path);
void write_score_file(const std::string& path, const std::vector<ScoreRecord>& records);

}  // namespace qfuse
