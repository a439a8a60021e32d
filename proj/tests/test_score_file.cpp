#include <doctest.h>

#include <cmath>

#include "qfuse/rng.hpp"
#include "qfuse/score_file.hpp"

using namespace qfuse;

namespace {

const char* kHeaderLine = "access_id,session,label,channel,device,score,q_template,q_query\n";

std::string line(const std::string& body) { return std::string(kHeaderLine) + body + "\n"; }

}  // namespace

TEST_CASE("an empty score field parses as a missing score") {
    const auto records =
        parse_score_file(line("a1,2,genuine,fp1,fo,,0.5,0.6"));
    REQUIRE(records.size() == 1);
    CHECK_FALSE(records[0].score.has_value());
    CHECK(records[0].q_template.value(0) == doctest::Approx(0.5));
    CHECK(records[0].label == Label::Target);
    CHECK(records[0].device_true == DeviceClass::FingerOptical);
}

TEST_CASE("fourteen semicolon-joined face qualities parse to arity fourteen") {
    std::string qs = "0.1";
    for (int i = 1; i < 14; ++i) qs += ";0." + std::to_string(i % 9 + 1);
    const auto records =
        parse_score_file(line("a1,2,unknown,face,xfa1,1.25," + qs + "," + qs));
    REQUIRE(records.size() == 1);
    CHECK(records[0].q_query.arity() == 14);
    CHECK(records[0].q_query.all_present());
}

TEST_CASE("a non-numeric score is reported with its line number") {
    try {
        parse_score_file(line("a1,2,genuine,fp1,fo,abc,0.5,0.6"));
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == 2);
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
}

TEST_CASE("quality arity mismatches are rejected") {
    CHECK_THROWS_AS(parse_score_file(line("a1,2,genuine,fp1,fo,1.0,0.5;0.6,0.6")),
                    ParseError);
    CHECK_THROWS_AS(parse_score_file(line("a1,2,genuine,face,fnf1,1.0,0.5,0.5")),
                    ParseError);
}

TEST_CASE("structural problems are rejected with context") {
    CHECK_THROWS_AS(parse_score_file("bogus header\n"), ParseError);
    CHECK_THROWS_AS(parse_score_file(line("a1,2,genuine,fp1,fo,1.0,0.5")), ParseError);
    CHECK_THROWS_AS(parse_score_file(line("a1,3,genuine,fp1,fo,1.0,0.5,0.6")), ParseError);
    CHECK_THROWS_AS(parse_score_file(line("a1,2,maybe,fp1,fo,1.0,0.5,0.6")), ParseError);
    CHECK_THROWS_AS(parse_score_file(line("a1,2,genuine,fp9,fo,1.0,0.5,0.6")), ParseError);
    // Device class must match the channel modality.
    CHECK_THROWS_AS(parse_score_file(line("a1,2,genuine,fp1,fnf1,1.0,0.5,0.6")), ParseError);
}

TEST_CASE("an empty record list writes the header only") {
    CHECK(write_score_file(std::vector<ScoreRecord>{}) == kHeaderLine);
}

TEST_CASE("one record survives a write/parse round trip bit-exact") {
    ScoreRecord r;
    r.access_id = "acc-7";
    r.session = 1;
    r.channel = ChannelId::fingerprint(2);
    r.device_true = DeviceClass::FingerCross;
    r.score = 0.25;
    r.label = Label::NonTarget;
    r.q_template = QualityVector::of({0.5});
    r.q_query = QualityVector::of({0.125});

    const auto parsed = parse_score_file(write_score_file({r}));
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].access_id == r.access_id);
    CHECK(parsed[0].session == r.session);
    CHECK(parsed[0].channel == r.channel);
    CHECK(parsed[0].device_true == r.device_true);
    CHECK(*parsed[0].score == 0.25);
    CHECK(parsed[0].q_template == r.q_template);
    CHECK(parsed[0].q_query == r.q_query);
    CHECK(parsed[0].label == r.label);
}

TEST_CASE("a missing score writes as an empty field") {
    ScoreRecord r;
    r.access_id = "a1";
    r.channel = ChannelId::fingerprint(1);
    r.q_template = QualityVector::of({0.5});
    r.q_query = QualityVector::of({0.5});
    const std::string text = write_score_file({r});
    CHECK(text.find(",unknown,fp1,unknown,,0.5,0.5") != std::string::npos);
    const auto parsed = parse_score_file(text);
    CHECK_FALSE(parsed[0].score.has_value());
}

TEST_CASE("missing quality elements round-trip through empty slots") {
    ScoreRecord r;
    r.access_id = "a1";
    r.channel = ChannelId::face();
    r.label = Label::Target;
    r.q_template = QualityVector::all_missing(14);
    r.q_query = QualityVector::all_missing(14);
    r.q_query.set(3, 0.75);

    const auto parsed = parse_score_file(write_score_file({r}));
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].q_template == r.q_template);
    CHECK(parsed[0].q_query == r.q_query);
}

TEST_CASE("written files are a fixed point of parse-then-write") {
    CounterRng rng(61, 0);
    std::vector<ScoreRecord> records;
    for (int i = 0; i < 200; ++i) {
        ScoreRecord r;
        r.access_id = "r" + std::to_string(1000 + i);
        r.session = rng.bernoulli(0.5) ? 1 : 2;
        const bool face = rng.bernoulli(0.25);
        r.channel = face ? ChannelId::face()
                         : ChannelId::fingerprint(1 + static_cast<int>(rng.uniform() * 3));
        if (face)
            r.device_true = rng.bernoulli(0.5) ? DeviceClass::FaceHighRes
                                               : DeviceClass::FaceCross;
        else if (rng.bernoulli(0.8))
            r.device_true = rng.bernoulli(0.5) ? DeviceClass::FingerOptical
                                               : DeviceClass::FingerCross;
        if (!rng.bernoulli(0.1)) r.score = rng.normal(0.0, 100.0);
        r.label = rng.bernoulli(0.3)
                      ? Label::Unknown
                      : (rng.bernoulli(0.5) ? Label::Target : Label::NonTarget);
        const int arity = quality_arity(r.channel);
        r.q_template = QualityVector::all_missing(arity);
        r.q_query = QualityVector::all_missing(arity);
        for (int k = 0; k < arity; ++k) {
            if (!rng.bernoulli(0.1)) r.q_template.set(k, std::abs(rng.normal(0.5, 0.3)));
            if (!rng.bernoulli(0.1)) r.q_query.set(k, std::abs(rng.normal(0.5, 0.3)));
        }
        records.push_back(std::move(r));
    }

    const std::string once = write_score_file(records);
    const auto parsed = parse_score_file(once);
    CHECK(write_score_file(parsed) == once);

    // Values survive the 9-significant-digit format to high relative accuracy.
    REQUIRE(parsed.size() == records.size());
    for (size_t i = 0; i < records.size(); ++i) {
        if (!records[i].score) continue;
        const double a = *records[i].score, b = *parsed[i].score;
        CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)));
    }
}

TEST_CASE("crlf input is tolerated") {
    const auto records = parse_score_file(
        std::string("access_id,session,label,channel,device,score,q_template,q_query\r\n") +
        "a1,2,genuine,fp1,fo,1.5,0.5,0.6\r\n");
    REQUIRE(records.size() == 1);
    CHECK(*records[0].score == doctest::Approx(1.5));
}
