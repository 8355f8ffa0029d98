#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "gait/csvio.hpp"
#include "gait/rng.hpp"
#include "gait/types.hpp"

using namespace gait;

TEST_CASE("phase codes map 1:1", "[core]") {
    CHECK(phase_from_code(1) == GaitPhase::Stance);
    CHECK(phase_from_code(2) == GaitPhase::TakeOff);
    CHECK(phase_from_code(3) == GaitPhase::Swing);
    CHECK(phase_from_code(4) == GaitPhase::Strike);
    CHECK(phase_from_code(5) == GaitPhase::Auxiliary);
    for (GaitPhase p : kAllPhases) CHECK(phase_from_code(phase_code(p)) == p);
    CHECK_THROWS_AS(phase_from_code(0), InvalidPhaseCode);
    CHECK_THROWS_AS(phase_from_code(6), InvalidPhaseCode);
    CHECK_THROWS_AS(phase_from_code(-3), InvalidPhaseCode);
}

namespace {

SessionRecording make_session(std::size_t n, bool labeled, bool with_mag,
                              std::uint64_t seed) {
    Rng rng(seed);
    SessionRecording s;
    s.meta.subject = "t01";
    for (std::size_t i = 0; i < n; ++i) {
        RawImuSample r;
        r.t_us = static_cast<std::int64_t>(i) * 10000;
        for (int k = 0; k < 3; ++k) {
            r.a_body[k] = rng.normal(0, 3);
            r.omega_body[k] = rng.normal(0, 1);
        }
        r.orientation = quat_normalize(
            {rng.normal(), rng.normal(), rng.normal(), rng.normal()});
        if (with_mag) r.mag = Vec3{rng.normal(30, 5), rng.normal(0, 5), rng.normal(-40, 5)};
        s.samples.push_back(r);
        if (labeled)
            s.labels.push_back(phase_from_index(static_cast<int>(rng.below(5))));
    }
    return s;
}

} // namespace

TEST_CASE("validate_session flags structural problems", "[core]") {
    SessionRecording good = make_session(100, true, false, 7);
    CHECK(validate_session(good).ok());

    SECTION("label length mismatch") {
        SessionRecording s = good;
        s.labels.pop_back();
        const ValidationReport r = validate_session(s);
        REQUIRE_FALSE(r.ok());
        CHECK(r.issues[0].kind == "label_mismatch");
    }
    SECTION("NaN reported with its index") {
        SessionRecording s = good;
        s.samples[7].a_body[1] = std::nan("");
        const ValidationReport r = validate_session(s);
        REQUIRE(r.issues.size() == 1);
        CHECK(r.issues[0].index == 7);
        CHECK(r.issues[0].kind == "non_finite");
    }
    SECTION("non-monotonic timestamps") {
        SessionRecording s = good;
        s.samples[20].t_us = s.samples[19].t_us;
        const ValidationReport r = validate_session(s);
        REQUIRE_FALSE(r.ok());
        CHECK(r.issues[0].kind == "non_monotonic");
    }
    SECTION("zero quaternion") {
        SessionRecording s = good;
        s.samples[3].orientation = {0, 0, 0, 0};
        const ValidationReport r = validate_session(s);
        REQUIRE_FALSE(r.ok());
        CHECK(r.issues[0].kind == "degenerate_orientation");
    }
}

TEST_CASE("session csv round-trips bit-exactly", "[core]") {
    for (const auto [labeled, mag] :
         {std::pair{true, true}, {true, false}, {false, true}, {false, false}}) {
        SessionRecording s = make_session(64, labeled, mag, 1234 + (labeled ? 1 : 0) + (mag ? 2 : 0));
        std::ostringstream os;
        write_session_csv(os, s);
        std::istringstream is(os.str());
        SessionRecording back = read_session_csv(is);
        REQUIRE(back.samples.size() == s.samples.size());
        REQUIRE(back.labels.size() == s.labels.size());
        for (std::size_t i = 0; i < s.samples.size(); ++i) {
            CHECK(back.samples[i].t_us == s.samples[i].t_us);
            CHECK(back.samples[i].a_body == s.samples[i].a_body);
            CHECK(back.samples[i].omega_body == s.samples[i].omega_body);
            CHECK(back.samples[i].orientation == s.samples[i].orientation);
            CHECK(back.samples[i].mag == s.samples[i].mag);
        }
        CHECK(back.labels == s.labels);
        // and the re-encoding is byte-identical
        std::ostringstream os2;
        write_session_csv(os2, back);
        CHECK(os2.str() == os.str());
    }
}

TEST_CASE("session csv rejects malformed input", "[core]") {
    std::istringstream empty("");
    CHECK_THROWS_AS(read_session_csv(empty), CorruptFile);
    std::istringstream badhdr("time,ax\n");
    CHECK_THROWS_AS(read_session_csv(badhdr), CorruptFile);
    std::istringstream shortrow(std::string(kSessionCsvHeader) + "\n1,2,3\n");
    CHECK_THROWS_AS(read_session_csv(shortrow), CorruptFile);
}

TEST_CASE("step log round-trips", "[core]") {
    std::vector<StepInterval> steps;
    StepInterval a;
    a.start_us = 300000;
    a.end_us = 900000;
    a.raw_score = 4.0;
    a.norm_score = 1.0;
    a.phases_seen = {GaitPhase::TakeOff, GaitPhase::Swing, GaitPhase::Strike,
                     GaitPhase::Stance};
    StepInterval b;
    b.start_us = 1200000;
    b.end_us = 1810000;
    b.raw_score = 3.0;
    b.norm_score = 0.75;
    b.phases_seen = {GaitPhase::TakeOff, GaitPhase::Strike, GaitPhase::Stance};
    steps = {a, b};
    std::ostringstream os;
    write_step_log(os, steps);
    // spot-check the wire form: codes joined by '-'
    CHECK(os.str().find("2-3-4-1") != std::string::npos);
    CHECK(os.str().find("2-4-1") != std::string::npos);
    std::istringstream is(os.str());
    const std::vector<StepInterval> back = read_step_log(is);
    REQUIRE(back.size() == 2);
    CHECK(back[0].start_us == a.start_us);
    CHECK(back[0].end_us == a.end_us);
    CHECK(back[0].raw_score == a.raw_score);
    CHECK(back[0].norm_score == a.norm_score);
    CHECK(back[0].phases_seen == a.phases_seen);
    CHECK(back[1].phases_seen == b.phases_seen);
}

TEST_CASE("fmt_double survives awkward values", "[core]") {
    Rng rng(99);
    for (int i = 0; i < 2000; ++i) {
        double v;
        switch (i % 4) {
        case 0: v = rng.normal(0, 1e-7); break;
        case 1: v = rng.normal(0, 1e9); break;
        case 2: v = rng.uniform(-1, 1); break;
        default: v = rng.normal(); break;
        }
        CHECK(parse_double(fmt_double(v)) == v);
    }
    CHECK(parse_double(fmt_double(0.0)) == 0.0);
    CHECK(parse_double(fmt_double(-0.0)) == -0.0);
}
