#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "fewsel/grid.hpp"
#include "fewsel/render.hpp"
#include "fewsel/task.hpp"

using namespace fewsel;
namespace fs = std::filesystem;

static const fs::path kData = FEWSEL_TEST_DATA;

namespace {

fs::path temp_file(const std::string& name, const std::string& content) {
    fs::path p = fs::temp_directory_path() / ("fewsel_test_" + name);
    std::ofstream out(p);
    out << content;
    return p;
}

} // namespace

TEST_CASE("load_dataset: closed-class happy path") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    REQUIRE(ds.examples.size() == 12);
    REQUIRE(ds.label_space.kind == LabelSpaceKind::ClosedClass);
    REQUIRE(ds.label_space.size() == 2);
    CHECK(ds.label_space.labels[0].id == "pos");
    CHECK(ds.examples[0].gold_labels.front() == "pos");
}

TEST_CASE("load_dataset: two-line file echoes input") {
    auto path = temp_file("two.jsonl",
                          R"({"id":"a","input":{"x":"1"},"labels":["yes"]})"
                          "\n"
                          R"({"id":"b","input":{"x":"2"},"labels":["no"]})"
                          "\n");
    auto labels = temp_file("two_labels.json", R"([{"id":"yes","surface":" yes"},{"id":"no","surface":" no"}])");
    Dataset ds = load_dataset(path, labels);
    REQUIRE(ds.examples.size() == 2);
    REQUIRE(ds.label_space.size() == 2);
}

TEST_CASE("load_dataset: empty file") {
    auto path = temp_file("empty.jsonl", "");
    auto labels = temp_file("empty_labels.json", R"([{"id":"yes","surface":"y"}])");
    CHECK_THROWS_WITH(load_dataset(path, labels), Catch::Matchers::ContainsSubstring("no examples"));
}

TEST_CASE("load_dataset: gold label outside the space names the example") {
    auto path = temp_file("bad.jsonl",
                          R"({"id":"e1","input":{"x":"1"},"labels":["yes"]})"
                          "\n"
                          R"({"id":"e7","input":{"x":"2"},"labels":["maybe"]})"
                          "\n");
    auto labels = temp_file("bad_labels.json", R"([{"id":"yes","surface":"y"},{"id":"no","surface":"n"}])");
    CHECK_THROWS_WITH(load_dataset(path, labels), Catch::Matchers::ContainsSubstring("e7"));
}

TEST_CASE("load_dataset: parse error carries the line number") {
    auto path = temp_file("parse.jsonl",
                          R"({"id":"a","input":{"x":"1"},"labels":["yes"]})"
                          "\n{not json\n");
    auto labels = temp_file("parse_labels.json", R"([{"id":"yes","surface":"y"}])");
    CHECK_THROWS_WITH(load_dataset(path, labels), Catch::Matchers::ContainsSubstring(":2:"));
}

TEST_CASE("load_dataset: per-example candidate spaces") {
    Dataset ds = load_dataset(kData / "cloze.jsonl");
    REQUIRE(ds.label_space.kind == LabelSpaceKind::PerExampleCandidates);
    REQUIRE(ds.examples.size() == 4);
    CHECK(ds.examples[3].gold_labels.size() == 2);

    auto missing = temp_file("nocand.jsonl", R"({"id":"a","input":{"x":"1"},"labels":["yes"]})");
    CHECK_THROWS_WITH(load_dataset(missing), Catch::Matchers::ContainsSubstring("candidates"));

    auto bad_gold = temp_file("badgold.jsonl",
                              R"({"id":"a","input":{"x":"1"},"labels":["yes"],"candidates":["no","maybe"]})");
    CHECK_THROWS_WITH(load_dataset(bad_gold), Catch::Matchers::ContainsSubstring("a"));
}

TEST_CASE("load_dataset: duplicate ids rejected") {
    auto path = temp_file("dup.jsonl",
                          R"({"id":"a","input":{},"labels":["yes"]})"
                          "\n"
                          R"({"id":"a","input":{},"labels":["yes"]})"
                          "\n");
    auto labels = temp_file("dup_labels.json", R"([{"id":"yes","surface":"y"}])");
    CHECK_THROWS_WITH(load_dataset(path, labels), Catch::Matchers::ContainsSubstring("duplicate"));
}

TEST_CASE("sample_train_set: deterministic in seed") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    auto [train1, pool1] = sample_train_set(ds, 5, 42);
    auto [train2, pool2] = sample_train_set(ds, 5, 42);
    CHECK(train1.ids() == train2.ids());
    REQUIRE(pool1.size() == 7);
    auto [train3, pool3] = sample_train_set(ds, 5, 43);
    CHECK(train1.ids() != train3.ids());  // overwhelmingly likely
    (void)pool2;
    (void)pool3;
}

TEST_CASE("sample_train_set: n exceeding dataset errors") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    CHECK_THROWS_AS(sample_train_set(ds, 13, 1), ConfigError);
}

TEST_CASE("sample_train_set: coverage holds over 100 seeds") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        auto [train, pool] = sample_train_set(ds, 5, seed, true);
        std::set<std::string> covered;
        for (const auto& ex : train.examples) covered.insert(ex.gold_labels.front());
        REQUIRE(covered.size() == 2);
        (void)pool;
    }
}

TEST_CASE("sample_train_set: coverage property on random datasets") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        const std::size_t classes = 2 + rng.below(3);
        const std::size_t examples = classes + 2 + rng.below(10);
        Dataset ds;
        ds.id = "gen";
        ds.label_space.kind = LabelSpaceKind::ClosedClass;
        for (std::size_t c = 0; c < classes; ++c)
            ds.label_space.labels.push_back({"c" + std::to_string(c), "s" + std::to_string(c)});
        for (std::size_t i = 0; i < examples; ++i) {
            Example ex;
            ex.id = "e" + std::to_string(i);
            ex.input_fields["x"] = "v";
            // ensure every class appears at least once
            std::size_t cls = i < classes ? i : rng.below(classes);
            ex.gold_labels.push_back("c" + std::to_string(cls));
            ds.examples.push_back(ex);
        }
        const std::size_t n = classes + rng.below(examples - classes + 1);
        auto [train, pool] = sample_train_set(ds, n, rng.next(), true);
        std::set<std::string> covered;
        for (const auto& ex : train.examples) covered.insert(ex.gold_labels.front());
        REQUIRE(covered.size() == classes);
        (void)pool;
    }
}

TEST_CASE("sample_train_set: infeasible coverage errors") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    CHECK_THROWS_AS(sample_train_set(ds, 1, 1, true), ConfigError);

    Dataset one_sided = ds;
    for (auto& ex : one_sided.examples) ex.gold_labels = {"pos"};
    CHECK_THROWS_WITH(sample_train_set(one_sided, 5, 1, true), Catch::Matchers::ContainsSubstring("neg"));
}

TEST_CASE("render_sequence: query only (empty prefix)") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    PromptCandidate cand{"c", "Q: {text} A:{label}", "Q: {text} A:{label}", "\n", {}};
    RenderedSequence seq = render_sequence(cand, ds.label_space, {}, &ds.examples[0]);
    CHECK(seq.blocks.empty());
    REQUIRE(seq.query.has_value());
    CHECK(seq.text == "Q: the film was a delight A:");
    CHECK(seq.query->label_begin == seq.text.size());
    CHECK(seq.query->label_begin == seq.query->label_end);
}

TEST_CASE("render_sequence: two blocks, exact text and spans") {
    LabelSpace space{LabelSpaceKind::ClosedClass, {{"y", "y1"}, {"n", "y2"}}};
    Example e1{"a", {{"x", "x1"}}, {"y"}, {}, {}};
    Example e2{"b", {{"x", "x2"}}, {"n"}, {}, {}};
    PromptCandidate cand{"c", "Q: {x} A: {label}", "Q: {x} A: {label}", "\n", {}};
    std::vector<Example> ordered{e1, e2};
    RenderedSequence seq = render_sequence(cand, space, ordered);
    CHECK(seq.text == "Q: x1 A: y1\nQ: x2 A: y2");
    REQUIRE(seq.blocks.size() == 2);
    CHECK(seq.text.substr(seq.blocks[0].label_begin, 2) == "y1");
    CHECK(seq.text.substr(seq.blocks[1].label_begin, 2) == "y2");
    CHECK(seq.blocks[0].block_begin == 0);
    CHECK(seq.blocks[1].block_end == seq.text.size());

    RenderedSequence again = render_sequence(cand, space, ordered);
    CHECK(seq.text == again.text);  // byte-identical
}

TEST_CASE("render_sequence: prefix rendering is a byte prefix") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    auto candidates = load_candidates(kData / "sentiment_candidates.json");
    Rng rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const auto& cand = candidates[rng.below(candidates.size())];
        std::vector<Example> ordered;
        const std::size_t n = 2 + rng.below(4);
        for (std::size_t i = 0; i < n; ++i) ordered.push_back(ds.examples[rng.below(ds.examples.size())]);
        RenderedSequence full = render_sequence(cand, ds.label_space, ordered);
        const std::size_t cut = 1 + rng.below(n - 1);
        std::span<const Example> prefix(ordered.data(), cut);
        RenderedSequence part = render_sequence(cand, ds.label_space, prefix);
        REQUIRE(full.text.substr(0, part.text.size()) == part.text);
    }
}

TEST_CASE("render_sequence: unresolved placeholder names the field") {
    LabelSpace space{LabelSpaceKind::ClosedClass, {{"y", "s"}}};
    Example e{"a", {{"x", "1"}}, {"y"}, {}, {}};
    PromptCandidate cand{"c", "Q: {missing} A: {label}", "Q: {x} A: {label}", "\n", {}};
    std::vector<Example> ordered{e};
    CHECK_THROWS_WITH(render_sequence(cand, space, ordered), Catch::Matchers::ContainsSubstring("missing"));
}

TEST_CASE("candidate template validation") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");

    PromptCandidate no_label{"c", "Q: {text}", "Q: {text} {label}", "\n", {}};
    CHECK_THROWS_AS(validate_candidate(no_label, ds), DataError);

    PromptCandidate twice{"c", "{label} {text} {label}", "Q: {text} {label}", "\n", {}};
    CHECK_THROWS_AS(validate_candidate(twice, ds), DataError);

    PromptCandidate not_final{"c", "A: {label} Q: {text}", "Q: {text} {label}", "\n", {}};
    CHECK_THROWS_AS(validate_candidate(not_final, ds), DataError);

    // trailing literal text after {label} is fine; a later placeholder is not
    PromptCandidate trailing{"c", "Q: {text} A: {label}.", "Q: {text} A: {label}", "\n", {}};
    CHECK_NOTHROW(validate_candidate(trailing, ds));
}

TEST_CASE("effective_labels: per-candidate surface overrides") {
    Dataset ds = load_dataset(kData / "sentiment.jsonl", kData / "sentiment_labels.json");
    auto candidates = load_candidates(kData / "sentiment_candidates.json");
    auto labels = effective_labels(ds.label_space, ds.examples[0], candidates[2]);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0].surface == " good");
    CHECK(labels[1].surface == " bad");

    auto plain = effective_labels(ds.label_space, ds.examples[0], candidates[0]);
    CHECK(plain[0].surface == " positive");
}

TEST_CASE("effective_labels: per-example candidates keep example order") {
    Dataset ds = load_dataset(kData / "cloze.jsonl");
    PromptCandidate cand{"c", "{subject}: {label}", "{subject}: {label}", "\n", {}};
    auto labels = effective_labels(ds.label_space, ds.examples[1], cand);
    REQUIRE(labels.size() == 3);
    CHECK(labels[0].id == "Vienna");
    CHECK(labels[0].surface == "Vienna");
}

TEST_CASE("enumerate_grid") {
    std::map<std::string, std::vector<std::string>> adapet_axes{
        {"T", {"250", "500", "750", "1000"}}, {"M", {"0.075", "0.10", "0.105", "0.15"}}};
    CHECK(enumerate_grid(adapet_axes).size() == 16);

    std::map<std::string, std::vector<std::string>> single{{"a", {"1"}}};
    CHECK(enumerate_grid(single) == std::vector<std::string>{"a=1"});

    std::map<std::string, std::vector<std::string>> two{{"a", {"1", "2"}}, {"b", {"x"}}};
    CHECK(enumerate_grid(two) == std::vector<std::string>{"a=1&b=x", "a=2&b=x"});

    std::map<std::string, std::vector<std::string>> empty_axis{{"a", {}}};
    CHECK_THROWS_AS(enumerate_grid(empty_axis), ConfigError);

    // ids are deterministic
    CHECK(enumerate_grid(adapet_axes) == enumerate_grid(adapet_axes));
}
