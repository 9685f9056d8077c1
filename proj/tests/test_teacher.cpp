#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "cat/rng.hpp"
#include "cat/teacher.hpp"
#include "oracle_helpers.hpp"

using namespace cat;

namespace {

PseudoLabel scored(double score) {
    PseudoLabel p;
    p.instance.bbox = {0, 0, 10, 10};
    p.instance.label = onehot(0, 2);
    p.instance.score = score;
    p.score = score;
    return p;
}

}  // namespace

TEST_CASE("ema_params blends element-wise") {
    const ParameterVector out = ema_params({1.0, 0.0}, {0.0, 1.0}, 0.9);
    CHECK(out[0] == Catch::Approx(0.9));
    CHECK(out[1] == Catch::Approx(0.1));

    const ParameterVector teacher{3.0, -2.0, 0.5};
    const ParameterVector student{1.0, 1.0, 1.0};
    CHECK(ema_params(teacher, student, 1.0) == teacher);
    CHECK(ema_params(teacher, student, 0.0) == student);

    CHECK_THROWS_AS(ema_params({1.0}, {1.0, 2.0}, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(ema_params(teacher, student, 1.5), std::invalid_argument);
}

TEST_CASE("burn_in_copy hands over the student verbatim") {
    const ParameterVector student{1.0, 2.0, 3.0};
    const ParameterVector teacher = burn_in_copy(student);
    CHECK(teacher == student);
    CHECK(ema_params(teacher, student, 1.0) == student);
    CHECK_THROWS_AS(burn_in_copy({}), std::invalid_argument);
}

TEST_CASE("repeated ema_params matches the closed form") {
    const double alpha = 0.9996;
    const ParameterVector t0{2.0, -1.0, 0.25};
    const ParameterVector s{0.5, 0.5, 0.5};
    for (long long k : {1LL, 10LL, 1000LL}) {
        ParameterVector teacher = t0;
        for (long long i = 0; i < k; ++i) teacher = ema_params(teacher, s, alpha);
        for (std::size_t j = 0; j < teacher.size(); ++j) {
            const double want = testoracle::ema_closed_form(t0[j], s[j], alpha, k);
            REQUIRE(teacher[j] == Catch::Approx(want).epsilon(0).margin(1e-9));
        }
    }
}

TEST_CASE("filter_pseudo_labels keeps scores at or above tau in order") {
    const std::vector<PseudoLabel> candidates{scored(0.9), scored(0.79), scored(0.8)};
    const std::vector<PseudoLabel> kept = filter_pseudo_labels(candidates, 0.8);
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].score == Catch::Approx(0.9));
    CHECK(kept[1].score == Catch::Approx(0.8));

    CHECK(filter_pseudo_labels(candidates, 0.0).size() == 3);
    const std::vector<PseudoLabel> exact = filter_pseudo_labels({scored(1.0), scored(0.999)}, 1.0);
    REQUIRE(exact.size() == 1);
    CHECK(exact[0].score == Catch::Approx(1.0));
    CHECK(filter_pseudo_labels({}, 1.0).empty());

    CHECK_THROWS_AS(filter_pseudo_labels(candidates, 1.1), std::invalid_argument);
}

TEST_CASE("filtering is idempotent and monotone in tau") {
    Rng rng = make_rng(30);
    std::vector<PseudoLabel> candidates;
    for (int i = 0; i < 40; ++i) candidates.push_back(scored(uniform01(rng)));

    const double tau1 = 0.3;
    const double tau2 = 0.7;
    const std::vector<PseudoLabel> once = filter_pseudo_labels(candidates, tau2);
    const std::vector<PseudoLabel> twice = filter_pseudo_labels(once, tau2);
    REQUIRE(once.size() == twice.size());
    for (std::size_t i = 0; i < once.size(); ++i) REQUIRE(once[i].score == twice[i].score);

    const std::vector<PseudoLabel> loose = filter_pseudo_labels(candidates, tau1);
    std::size_t j = 0;
    for (const PseudoLabel& p : once) {
        while (j < loose.size() && loose[j].score != p.score) ++j;
        REQUIRE(j < loose.size());
        ++j;
    }
}

TEST_CASE("training_schedule switches at the documented boundaries") {
    CHECK(training_schedule(0) == TrainingStage::BurnIn);
    CHECK(training_schedule(19999) == TrainingStage::BurnIn);
    CHECK(training_schedule(20000) == TrainingStage::Mutual);
    CHECK(training_schedule(79999) == TrainingStage::Mutual);
    CHECK(training_schedule(80000) == TrainingStage::Done);

    CHECK(training_schedule(5, 10, 20) == TrainingStage::BurnIn);
    CHECK(training_schedule(10, 10, 20) == TrainingStage::Mutual);
    CHECK(training_schedule(25, 10, 20) == TrainingStage::Done);

    CHECK_THROWS_AS(training_schedule(-1), std::invalid_argument);
    CHECK_THROWS_AS(training_schedule(0, 30, 20), std::invalid_argument);

    CHECK(stage_name(TrainingStage::BurnIn) == std::string("burn_in"));
    CHECK(stage_name(TrainingStage::Mutual) == std::string("mutual"));
    CHECK(stage_name(TrainingStage::Done) == std::string("done"));
}
