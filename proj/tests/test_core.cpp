#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "mag/dataset.hpp"
#include "mag/seed.hpp"
#include "mag/stats.hpp"
#include "mag/types.hpp"

using namespace mag;

namespace {

EnvTransition make_t(int o0, int o1, int a0, int a1, double r, int n0, int n1,
                     bool terminal = false) {
    EnvTransition t;
    t.obs = JointObservation({o0, o1});
    t.act = JointAction({a0, a1});
    t.reward = r;
    t.next_obs = JointObservation({n0, n1});
    t.terminal = terminal;
    return t;
}

SpaceSpec two_agent_spec() { return SpaceSpec({3, 2}, 2); }

}  // namespace

TEST_CASE("seed keys: identical paths give identical streams, children differ") {
    SeedKey a(42);
    SeedKey b(42);
    CHECK(a.child("x").stream() == b.child("x").stream());
    CHECK(a.child("x").stream() != a.child("y").stream());
    CHECK(a.child("x", 0).stream() != a.child("x", 1).stream());
    CHECK(SeedKey(43).child("x").stream() != a.child("x").stream());

    Rng r1(a.child("x"));
    Rng r2(b.child("x"));
    for (int i = 0; i < 100; ++i) CHECK(r1.next_u64() == r2.next_u64());
}

TEST_CASE("rng categorical matches the cdf") {
    Rng rng(SeedKey(7));
    const std::vector<double> p{0.2, 0.5, 0.3};
    std::vector<long> counts(3, 0);
    const int n = 100000;
    for (int i = 0; i < n; ++i) ++counts[rng.categorical(p)];
    for (int k = 0; k < 3; ++k)
        CHECK(std::abs(static_cast<double>(counts[k]) / n - p[k]) < 0.01);
}

TEST_CASE("mixed-radix joint indexing round-trips") {
    const auto spec = two_agent_spec();
    CHECK(spec.joint_obs_count() == 6);
    CHECK(spec.joint_act_count() == 4);
    for (int i = 0; i < spec.joint_obs_count(); ++i)
        CHECK(spec.obs_index(spec.obs_at(i)) == i);
    for (int i = 0; i < spec.joint_act_count(); ++i)
        CHECK(spec.act_index(spec.act_at(i)) == i);
}

TEST_CASE("dataset append: identity and forced FIFO") {
    Dataset d(two_agent_spec(), 2);
    d.append(make_t(0, 0, 0, 0, 0.0, 1, 0));
    CHECK(d.size() == 1);
    d.append(make_t(1, 0, 0, 0, 0.5, 2, 1));
    d.append(make_t(2, 1, 1, 1, 1.0, 0, 0));
    CHECK(d.size() == 2);
    // Oldest evicted; order is observable.
    CHECK(d.at(0).obs == JointObservation({1, 0}));
    CHECK(d.at(1).obs == JointObservation({2, 1}));
}

TEST_CASE("dataset rejects invalid transitions") {
    Dataset d(two_agent_spec(), 4);
    CHECK_THROWS_AS(d.append(make_t(3, 0, 0, 0, 0.0, 0, 0)), std::invalid_argument);  // obs range
    CHECK_THROWS_AS(d.append(make_t(0, 0, 2, 0, 0.0, 0, 0)), std::invalid_argument);  // act range
    auto bad = make_t(0, 0, 0, 0, 0.0, 0, 0);
    bad.obs.per_agent = {0};  // wrong arity
    CHECK_THROWS_AS(d.append(bad), std::invalid_argument);
    bad = make_t(0, 0, 0, 0, std::numeric_limits<double>::infinity(), 0, 0);
    CHECK_THROWS_AS(d.append(bad), std::invalid_argument);
}

TEST_CASE("sampling: forced single entry, determinism, empty error") {
    Dataset d(two_agent_spec(), 8);
    CHECK_THROWS_AS(d.sample_uniform(1, SeedKey(0)), std::runtime_error);
    const auto t = make_t(1, 1, 0, 1, 0.25, 2, 0);
    d.append(t);
    const auto s = d.sample_uniform(3, SeedKey(5));
    REQUIRE(s.size() == 3);
    for (const auto& x : s) CHECK(x == t);

    d.append(make_t(0, 0, 1, 1, 0.0, 1, 1));
    const auto s1 = d.sample_uniform(64, SeedKey(9).child("sampler"));
    const auto s2 = d.sample_uniform(64, SeedKey(9).child("sampler"));
    CHECK(s1 == s2);
}

TEST_CASE("uniform sampling histogram passes a chi-square test") {
    Dataset d(two_agent_spec(), 16);
    for (int i = 0; i < 10; ++i) d.append(make_t(i % 3, i % 2, i % 2, (i / 2) % 2, i * 0.1, 0, 0));
    REQUIRE(d.size() == 10);
    const auto sample = d.sample_uniform(100000, SeedKey(123).child("chi2"));
    // Identify entries by their reward, which is unique per entry here.
    std::vector<long> counts(10, 0);
    for (const auto& t : sample) ++counts[static_cast<std::size_t>(t.reward * 10.0 + 0.5)];
    const std::vector<double> uniform(10, 0.1);
    const double stat = stats::chi2_gof(counts, uniform);
    CHECK(stats::chi2_sf(stat, 9.0) > 1e-6);
}

TEST_CASE("size-4 dataset frequencies land within one percent") {
    Dataset d(two_agent_spec(), 4);
    for (int i = 0; i < 4; ++i) d.append(make_t(i % 3, 0, 0, 0, i, 0, 0));
    const auto sample = d.sample_uniform(100000, SeedKey(321));
    std::vector<long> counts(4, 0);
    for (const auto& t : sample) ++counts[static_cast<std::size_t>(t.reward + 0.5)];
    for (long c : counts)
        CHECK(std::abs(static_cast<double>(c) / 100000.0 - 0.25) < 0.01);
}

TEST_CASE("snapshot round-trip is byte-identical") {
    Dataset d(two_agent_spec(), 100);
    Rng rng(SeedKey(77));
    for (int i = 0; i < 37; ++i)
        d.append(make_t(static_cast<int>(rng.uniform_index(3)), static_cast<int>(rng.uniform_index(2)),
                        static_cast<int>(rng.uniform_index(2)), static_cast<int>(rng.uniform_index(2)),
                        rng.uniform(-2.0, 2.0), static_cast<int>(rng.uniform_index(3)),
                        static_cast<int>(rng.uniform_index(2)), i % 7 == 6));
    std::ostringstream first;
    d.save(first);
    std::istringstream in(first.str());
    const auto loaded = Dataset::load(in);
    CHECK(loaded == d);
    std::ostringstream second;
    loaded.save(second);
    CHECK(first.str() == second.str());
}

TEST_CASE("replaying an operation sequence reproduces byte-identical state") {
    auto run = [] {
        Dataset d(two_agent_spec(), 5);
        Rng rng(SeedKey(2024).child("ops"));
        for (int i = 0; i < 24; ++i)
            d.append(make_t(static_cast<int>(rng.uniform_index(3)),
                            static_cast<int>(rng.uniform_index(2)),
                            static_cast<int>(rng.uniform_index(2)),
                            static_cast<int>(rng.uniform_index(2)), rng.uniform01(),
                            static_cast<int>(rng.uniform_index(3)),
                            static_cast<int>(rng.uniform_index(2))));
        std::ostringstream out;
        d.save(out);
        auto sampled = d.sample_uniform(16, SeedKey(2024).child("sample"));
        return std::pair{out.str(), sampled};
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}
