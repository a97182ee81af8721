#include "doctest.h"

#include "flsim/config.hpp"

using namespace flsim;

TEST_CASE("empty config yields the full default set") {
    const ExperimentConfig c = parse_config_text("");
    CHECK(c.epochs == 45);
    CHECK(c.frequency == 10);
    CHECK(c.acquisitions == 10);
    CHECK(c.acquisition_size == 400);
    CHECK(c.devices == 4);
    CHECK(c.initial_train_size == 400);
    CHECK(c.mc_passes == 16);
    CHECK(c.lr == doctest::Approx(0.01f));
    CHECK(c.lambda == doctest::Approx(1e-4f));
    CHECK(c.batch_size == 50);
    CHECK(c.strategy == Strategy::Average);
    CHECK(c.regime == Regime::LabelSharded);
    CHECK(c.aggregate_mode == AggregateMode::Weights);
    CHECK_FALSE(c.batchnorm);
    CHECK(c.pool_size == 4000);
    CHECK(c.replay_per_class == 5);
}

TEST_CASE("headline configuration parses from one line") {
    const ExperimentConfig c = parse_config_text("epochs=45, frequency=10");
    CHECK(c.epochs == 45);
    CHECK(c.frequency == 10);
}

TEST_CASE("comments and whitespace are tolerated") {
    const ExperimentConfig c = parse_config_text(
        "# a comment\n  epochs = 20  # trailing\n\nstrategy=mix\nbatchnorm=true\n");
    CHECK(c.epochs == 20);
    CHECK(c.strategy == Strategy::Mixed);
    CHECK(c.batchnorm);
}

TEST_CASE("frequency must divide acquisitions, keys named in the error") {
    CHECK_THROWS_WITH_AS(parse_config_text("frequency=3, acquisitions=10"),
                         doctest::Contains("frequency"), ValidationError);
    CHECK_NOTHROW(parse_config_text("frequency=5, acquisitions=10"));
}

TEST_CASE("unknown keys and bad values are rejected by name") {
    CHECK_THROWS_WITH_AS(parse_config_text("epoch=45"), doctest::Contains("'epoch'"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_config_text("epochs=abc"), doctest::Contains("epochs"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_config_text("lr=-1"), doctest::Contains("lr"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(parse_config_text("strategy=best"),
                         doctest::Contains("strategy"), ValidationError);
}

TEST_CASE("type2 pool must cover the acquisition budget") {
    CHECK_THROWS_WITH_AS(
        parse_config_text("regime=type2, pool_size=1000, acquisitions=10, "
                          "acquisition_size=400, frequency=10"),
        doctest::Contains("pool_size"), ValidationError);
    CHECK_NOTHROW(parse_config_text("regime=type2, pool_size=4000"));
}

TEST_CASE("gradient aggregation mode is constrained") {
    CHECK_THROWS_AS(parse_config_text("aggregate_mode=gradients, strategy=opt"),
                    ValidationError);
    CHECK_THROWS_AS(parse_config_text("aggregate_mode=gradients, regime=type2"),
                    ValidationError);
    CHECK_NOTHROW(parse_config_text("aggregate_mode=gradients"));
}

TEST_CASE("config round-trips through its map form") {
    const ExperimentConfig c = parse_config_text(
        "regime=type2, strategy=mix, epochs=7, frequency=1, acquisitions=3, "
        "acquisition_size=100, pool_size=500, seed=9, acquisition=random");
    std::string text;
    for (const auto& [k, v] : config_to_map(c))
        if (!v.empty()) text += k + "=" + v + "\n";
    const ExperimentConfig d = parse_config_text(text);
    CHECK(d.regime == c.regime);
    CHECK(d.strategy == c.strategy);
    CHECK(d.epochs == c.epochs);
    CHECK(d.acquisition == Acquisition::Random);
    CHECK(d.seed == c.seed);
    CHECK(config_to_map(d) == config_to_map(c));
}
