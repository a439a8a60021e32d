#include "qfuse/score_file.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace qfuse {

namespace {

std::vector<std::string> split(const std::string& s, char delim) {
    std::vector<std::string> parts;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, delim)) parts.push_back(part);
    if (!s.empty() && s.back() == delim) parts.emplace_back();
    if (s.empty()) parts.emplace_back();
    return parts;
}

double parse_decimal(const std::string& s, int line, const char* what) {
    size_t consumed = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &consumed);
    } catch (const std::exception&) {
        throw ParseError(std::string("bad ") + what + " '" + s + "'", line);
    }
    if (consumed != s.size() || !std::isfinite(v))
        throw ParseError(std::string("bad ") + what + " '" + s + "'", line);
    return v;
}

Label parse_label(const std::string& s, int line) {
    if (s == "genuine") return Label::Target;
    if (s == "impostor") return Label::NonTarget;
    if (s == "unknown") return Label::Unknown;
    throw ParseError("unknown label '" + s + "'", line);
}

ChannelId parse_channel(const std::string& s, int line) {
    if (s == "face") return ChannelId::face();
    if (s == "fp1") return ChannelId::fingerprint(1);
    if (s == "fp2") return ChannelId::fingerprint(2);
    if (s == "fp3") return ChannelId::fingerprint(3);
    throw ParseError("unknown channel '" + s + "'", line);
}

std::optional<DeviceClass> parse_device(const std::string& s, int line) {
    if (s == "unknown" || s.empty()) return std::nullopt;
    if (s == "fnf1") return DeviceClass::FaceHighRes;
    if (s == "xfa1") return DeviceClass::FaceCross;
    if (s == "fo") return DeviceClass::FingerOptical;
    if (s == "xft") return DeviceClass::FingerCross;
    throw ParseError("unknown device '" + s + "'", line);
}

QualityVector parse_qualities(const std::string& field, int arity, int line,
                              const char* what) {
    if (field.empty()) return QualityVector::all_missing(arity);
    const std::vector<std::string> parts = split(field, ';');
    if (static_cast<int>(parts.size()) != arity)
        throw ParseError(std::string(what) + " quality arity " +
                             std::to_string(parts.size()) + ", expected " +
                             std::to_string(arity),
                         line);
    std::vector<std::optional<double>> values;
    values.reserve(parts.size());
    for (const std::string& p : parts) {
        if (p.empty())
            values.emplace_back(std::nullopt);
        else
            values.emplace_back(parse_decimal(p, line, what));
    }
    return QualityVector(std::move(values));
}

std::string join_qualities(const QualityVector& qv) {
    std::string out;
    for (int i = 0; i < qv.arity(); ++i) {
        if (i > 0) out += ';';
        if (qv.has(i)) out += format_score(qv.value(i));
    }
    return out;
}

}  // namespace

std::string format_score(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", value);
    return buf;
}

std::vector<ScoreRecord> parse_score_file(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::vector<ScoreRecord> records;

    if (!std::getline(in, line)) throw ParseError("missing header", 1);
    ++line_no;
    if (line == std::string(kScoreFileHeader) + "\r") line.pop_back();
    if (line != kScoreFileHeader) throw ParseError("bad header '" + line + "'", 1);

    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::vector<std::string> cols = split(line, ',');
        if (cols.size() != 8)
            throw ParseError("expected 8 columns, got " + std::to_string(cols.size()),
                             line_no);

        ScoreRecord r;
        r.access_id = cols[0];
        if (r.access_id.empty()) throw ParseError("empty access id", line_no);
        const double session = parse_decimal(cols[1], line_no, "session");
        if (session != 1.0 && session != 2.0)
            throw ParseError("session must be 1 or 2", line_no);
        r.session = static_cast<int>(session);
        r.label = parse_label(cols[2], line_no);
        r.channel = parse_channel(cols[3], line_no);
        r.device_true = parse_device(cols[4], line_no);
        if (r.device_true && modality_of(*r.device_true) != r.channel.modality)
            throw ParseError("device '" + cols[4] + "' does not match channel '" + cols[3] +
                                 "'",
                             line_no);
        if (!cols[5].empty()) r.score = parse_decimal(cols[5], line_no, "score");
        const int arity = quality_arity(r.channel);
        r.q_template = parse_qualities(cols[6], arity, line_no, "template");
        r.q_query = parse_qualities(cols[7], arity, line_no, "query");
        records.push_back(std::move(r));
    }
    return records;
}

std::string write_score_file(const std::vector<ScoreRecord>& records) {
    std::string out = kScoreFileHeader;
    out += '\n';
    for (const ScoreRecord& r : records) {
        out += r.access_id;
        out += ',';
        out += std::to_string(r.session);
        out += ',';
        out += to_string(r.label);
        out += ',';
        out += to_string(r.channel);
        out += ',';
        out += r.device_true ? to_string(*r.device_true) : "unknown";
        out += ',';
        if (r.score) out += format_score(*r.score);
        out += ',';
        out += join_qualities(r.q_template);
        out += ',';
        out += join_qualities(r.q_query);
        out += '\n';
    }
    return out;
}

std::vector<ScoreRecord> read_score_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open score file '" + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_score_file(buf.str());
}

void write_score_file(const std::string& path, const std::vector<ScoreRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write score file '" + path + "'");
    out << write_score_file(records);
}

}  // namespace qfuse
