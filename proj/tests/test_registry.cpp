#include <doctest.h>

#include <fstream>

#include "support/test_support.hpp"
#include "toolgate/errors.hpp"
#include "toolgate/registry.hpp"

using namespace toolgate;
using toolgate::testing::make_tool;
using toolgate::testing::synthetic_registry;
using toolgate::testing::temp_path;

namespace {

// Fixture from the stats oracle: four tools with argument counts
// {2, 5, 7, 10}; exactly one of them has an array-typed argument.
// Hand arithmetic: mean = (2+5+7+10)/4 = 6.0, max = 10, complex = 1/4.
ToolRegistry stats_fixture() {
    auto props = [](int n, bool with_array) {
        json out = json::object();
        for (int i = 0; i < n; ++i) {
            if (i == 0 && with_array)
                out["arg" + std::to_string(i)] = {{"type", "array"},
                                                  {"items", {{"type", "string"}}}};
            else
                out["arg" + std::to_string(i)] = {{"type", "string"}};
        }
        return out;
    };
    ToolRegistry registry(1700000000);
    registry.add_tools({
        make_tool("alpha_two", "two args", props(2, false), json::array(), "alpha"),
        make_tool("alpha_five", "five args", props(5, false), json::array(), "alpha"),
        make_tool("beta_seven", "seven args", props(7, true), json::array(), "beta"),
        make_tool("beta_ten", "ten args", props(10, false), json::array(), "beta"),
    });
    return registry;
}

}  // namespace

TEST_CASE("add_tools inserts batches and tracks services") {
    ToolRegistry registry(1);
    std::vector<ToolSpec> batch_a, batch_b;
    for (int i = 0; i < 12; ++i)
        batch_a.push_back(make_tool("gitlab_tool_" + std::to_string(i), "d", {}, {}, "gitlab"));
    registry.add_tools(batch_a);
    CHECK(registry.size() == 12);

    batch_b.push_back(make_tool("rocketchat_send", "d", {}, {}, "rocketchat"));
    registry.add_tools(batch_b);
    CHECK(registry.services() == std::set<std::string>{"gitlab", "rocketchat"});
}

TEST_CASE("duplicate names reject the whole batch atomically") {
    ToolRegistry registry(1);
    registry.add_tools({make_tool("taken", "d", {}, {}, "gitlab")});

    std::vector<ToolSpec> batch = {make_tool("fresh", "d", {}, {}, "azure"),
                                   make_tool("taken", "d", {}, {}, "azure")};
    try {
        registry.add_tools(batch);
        FAIL("expected duplicate-name error");
    } catch (const Error& e) {
        const std::string message = e.what();
        CHECK(message.find("taken") != std::string::npos);
        CHECK(message.find("gitlab") != std::string::npos);
        CHECK(message.find("azure") != std::string::npos);
    }
    // Nothing from the failed batch landed.
    CHECK(registry.size() == 1);
    CHECK(registry.find("fresh") == nullptr);
}

TEST_CASE("save/load round-trips a large synthetic registry") {
    const ToolRegistry original = synthetic_registry(1000);
    const auto path = temp_path("registry");
    original.save(path);
    const ToolRegistry loaded = ToolRegistry::load(path);
    CHECK(loaded == original);
    std::filesystem::remove(path);
}

TEST_CASE("round-trip identity holds over randomized registries") {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        const ToolRegistry original = synthetic_registry(1 + seed * 37, seed);
        const auto path = temp_path("registry-prop");
        original.save(path);
        CHECK(ToolRegistry::load(path) == original);
        std::filesystem::remove(path);
    }
}

TEST_CASE("loading an empty file is an integrity error") {
    const auto path = temp_path("registry-empty");
    std::ofstream(path).close();
    try {
        ToolRegistry::load(path);
        FAIL("expected integrity error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::integrity);
    }
    std::filesystem::remove(path);
}

TEST_CASE("loading a future format_version is a version error") {
    const auto path = temp_path("registry-future");
    std::ofstream(path) << R"({"format_version":99,"created_at":0,"count":0})" << "\n";
    try {
        ToolRegistry::load(path);
        FAIL("expected version error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::version);
        CHECK(std::string(e.what()).find("99") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("a truncated registry file is an integrity error") {
    const ToolRegistry original = synthetic_registry(50);
    const auto path = temp_path("registry-trunc");
    original.save(path);

    // Drop the last 40 bytes, cutting the final record in half.
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    in.close();
    std::string bytes = buffer.str();
    bytes.resize(bytes.size() - 40);
    std::ofstream(path, std::ios::binary | std::ios::trunc) << bytes;

    try {
        ToolRegistry::load(path);
        FAIL("expected integrity error");
    } catch (const Error& e) {
        CHECK(e.kind() == Error::Kind::integrity);
    }
    std::filesystem::remove(path);
}

TEST_CASE("stats match the hand-computed fixture") {
    const RegistryStats stats = stats_fixture().stats();
    CHECK(stats.tool_count == 4);
    CHECK(stats.mean_args == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(stats.max_args == 10);
    CHECK(stats.complex_fraction == doctest::Approx(0.25).epsilon(1e-12));

    // Per-service breakdown: alpha has {2,5}, beta has {7,10} with one complex.
    const auto& alpha = stats.per_service.at("alpha");
    CHECK(alpha.tool_count == 2);
    CHECK(alpha.mean_args == doctest::Approx(3.5));
    CHECK(alpha.max_args == 5);
    CHECK(alpha.complex_fraction == doctest::Approx(0.0));
    const auto& beta = stats.per_service.at("beta");
    CHECK(beta.mean_args == doctest::Approx(8.5));
    CHECK(beta.complex_fraction == doctest::Approx(0.5));
}

TEST_CASE("empty registry reports all-zero stats") {
    const RegistryStats stats = ToolRegistry().stats();
    CHECK(stats.tool_count == 0);
    CHECK(stats.mean_args == 0.0);
    CHECK(stats.max_args == 0);
    CHECK(stats.complex_fraction == 0.0);
    CHECK(stats.per_service.empty());
}

TEST_CASE("stats are linear under disjoint merges") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const ToolRegistry a = synthetic_registry(20 + seed, seed, "svc_a");
        const ToolRegistry b = synthetic_registry(30 + seed, seed + 100, "svc_b");

        ToolRegistry merged(0);
        std::vector<ToolSpec> specs;
        for (const auto& [name, spec] : a) specs.push_back(spec);
        for (const auto& [name, spec] : b) specs.push_back(spec);
        merged.add_tools(specs);

        const RegistryStats sa = a.stats(), sb = b.stats(), sm = merged.stats();
        CHECK(sm.tool_count == sa.tool_count + sb.tool_count);
        CHECK(sm.max_args == std::max(sa.max_args, sb.max_args));
    }
}

TEST_CASE("iteration order is sorted by name") {
    const ToolRegistry registry = synthetic_registry(100);
    std::string previous;
    for (const auto& [name, spec] : registry) {
        CHECK(previous < name);
        previous = name;
        CHECK(spec.name == name);
    }
}
