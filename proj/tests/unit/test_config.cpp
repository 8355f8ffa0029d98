#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gait/config.hpp"

using namespace gait;

TEST_CASE("defaults carry the tuned values", "[config]") {
    const RunConfig c;
    CHECK(c.window.h == 8);
    CHECK(c.window.stride == 2);
    CHECK(c.window.sample_rate_hz == 100.0);
    CHECK(c.tcn.num_blocks == 2);
    CHECK(c.tcn.channels == 96);
    CHECK(c.tcn.kernel_size == 2);
    CHECK(c.tcn.spatial_dropout == 0.255);
    CHECK(c.tcn.dense_units == 96);
    CHECK(c.train.learning_rate == 8.9e-4);
    CHECK(c.fsm.alpha == 0.6);
    c.validate();
}

TEST_CASE("overrides apply by dotted key and reject unknowns", "[config]") {
    RunConfig c;
    apply_config_override(c, "window.h=16");
    apply_config_override(c, "tcn.dilations=1,2,4");
    apply_config_override(c, "synth.balance=false");
    apply_config_override(c, "fsm.alpha = 0.75");
    CHECK(c.window.h == 16);
    CHECK(c.tcn.dilations == std::vector<int>{1, 2, 4});
    CHECK_FALSE(c.synth.balance);
    CHECK(c.fsm.alpha == 0.75);
    CHECK_THROWS_AS(apply_config_override(c, "nope.key=1"), ConfigError);
    CHECK_THROWS_AS(apply_config_override(c, "window.h=eight"), ConfigError);
    CHECK_THROWS_AS(apply_config_override(c, "window.h"), ConfigError);
}

TEST_CASE("config files parse with comments and blanks", "[config]") {
    namespace fs = std::filesystem;
    const fs::path p = fs::temp_directory_path() / "gait_cfg_test.cfg";
    {
        std::ofstream f(p);
        f << "# experiment setup\n"
          << "window.h = 12\n"
          << "\n"
          << "train.seed = 99  # deterministic\n"
          << "synth.aux_probability = 0.2\n";
    }
    RunConfig c;
    load_config_file(c, p);
    CHECK(c.window.h == 12);
    CHECK(c.train.seed == 99);
    CHECK(c.synth.aux_probability == 0.2);
    {
        std::ofstream f(p);
        f << "not a key value line\n";
    }
    RunConfig c2;
    CHECK_THROWS_AS(load_config_file(c2, p), ConfigError);
    fs::remove(p);
}

TEST_CASE("echo is stable and reparses to the same config", "[config]") {
    namespace fs = std::filesystem;
    RunConfig c;
    apply_config_override(c, "train.learning_rate=0.00123");
    apply_config_override(c, "synth.glitch_rate=0.05");
    std::ostringstream os1;
    write_config_echo(os1, c);
    // reparse the echo and echo again: fixed point
    const fs::path p = fs::temp_directory_path() / "gait_cfg_echo.cfg";
    {
        std::ofstream f(p);
        f << os1.str();
    }
    RunConfig c2;
    load_config_file(c2, p);
    std::ostringstream os2;
    write_config_echo(os2, c2);
    CHECK(os1.str() == os2.str());
    CHECK(os1.str().find("train.learning_rate = 0.00123") != std::string::npos);
    fs::remove(p);
}
