#include <doctest.h>

#include <filesystem>

#include "lgvq/config.hpp"
#include "lgvq/error.hpp"

using namespace lgvq;

namespace {

std::string error_text(const std::string& text, const Overrides& ov = {}) {
    try {
        parse_config(text, ov);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("defaults") {
    const auto c = parse_config("");
    CHECK(c.alpha == 0.1);
    CHECK(c.beta == 0.1);
    CHECK(c.gamma == 0.1);
    CHECK(c.omega == 0.25);
    CHECK(c.lr == 2e-4);
    CHECK(c.codebook_size == 64);
    CHECK(c.downsample == 8);
    CHECK(c.text_len == 16);
    CHECK(c.mask_mean == 0.55);
    CHECK(c.mask_std == 0.25);
    CHECK(c.mask_min == 0.5);
    CHECK(c.mask_max == 1.0);
    CHECK(c.gsa_variant == "verbatim");
    CHECK(c.grid_size() == 8);
    CHECK(c.alignment_active());
}

TEST_CASE("file values, comments and overrides") {
    const auto c = parse_config("# comment\nsteps = 10\nlr=0.001  # trailing\n\nuse_ras = false\n", {{"steps", "12"}});
    CHECK(c.steps == 12);
    CHECK(c.lr == 0.001);
    CHECK_FALSE(c.use_ras);
    CHECK_FALSE(c.ras_active());
}

TEST_CASE("to_text round trips every key") {
    auto c = parse_config("", {{"lr", "0.00123456789"}, {"manifest", "/x/y.jsonl"}, {"seed", "18446744073709551615"}});
    CHECK(parse_config(to_text(c)) == c);
    const auto keys = config_keys();
    for (const auto& k : keys) CHECK(to_text(c).find("\n" + k + " = ") != std::string::npos);
}

TEST_CASE("unknown keys are rejected by name") {
    const auto msg = error_text("", {{"bogus", "1"}});
    CHECK(msg.find("bogus") != std::string::npos);
}

TEST_CASE("every problem is listed at once") {
    const auto msg = error_text("steps = many\nfoo = 1\nnot a line\n", {{"alpha", "x"}});
    CHECK(msg.find("steps") != std::string::npos);
    CHECK(msg.find("foo") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
    CHECK(msg.find("alpha") != std::string::npos);

    const auto invalid = error_text("", {{"alpha", "-1"}, {"batch_size", "0"}, {"downsample", "6"}});
    CHECK(invalid.find("alpha") != std::string::npos);
    CHECK(invalid.find("batch_size") != std::string::npos);
    CHECK(invalid.find("downsample") != std::string::npos);
}

TEST_CASE("zero-weight losses stay off unless asked for") {
    auto c = parse_config("", {{"alpha", "0"}});
    CHECK_FALSE(c.gsa_active());
    c.compute_zero_weight_losses = true;
    CHECK(c.gsa_active());
    c.use_gsa = false;
    CHECK_FALSE(c.gsa_active());
}

TEST_CASE("override parsing") {
    CHECK(parse_override("a=b=c") == std::pair<std::string, std::string>{"a", "b=c"});
    CHECK_THROWS_AS(parse_override("novalue"), ConfigError);
}

TEST_CASE("missing config file") {
    CHECK_THROWS_AS(load_config("/nonexistent/lgvq.cfg"), ConfigError);
}

TEST_CASE("shipped toy config parses") {
    const auto c = load_config(std::filesystem::path(LGVQ_SOURCE_DIR) / "configs" / "toy.cfg");
    CHECK(validate(c).empty());
}

}
