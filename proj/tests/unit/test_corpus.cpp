#include "cuecot/corpus.hpp"
#include "cuecot/error.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

using namespace cuecot;
using cuecot::testing::fixture;
using cuecot::testing::TempDir;

namespace {

Dialogue make(std::string id, Language lang, std::vector<std::pair<Role, std::string>> turns,
              std::optional<std::string> gt = std::nullopt) {
    Dialogue d;
    d.id = std::move(id);
    d.language = lang;
    for (auto& [r, t] : turns) d.turns.push_back({r, t, {}});
    d.ground_truth = std::move(gt);
    return d;
}

}  // namespace

TEST(Dataset, LoadsFixtureRecords) {
    auto data = corpus::load_dataset(fixture("mini.jsonl"));
    ASSERT_EQ(data.size(), 3u);
    EXPECT_EQ(data[0].id, "en-1");
    EXPECT_EQ(data[1].language, Language::Zh);
    EXPECT_EQ(data[0].turns.size(), 3u);
    EXPECT_EQ(data[0].turns[1].role, Role::System);
    EXPECT_TRUE(data[2].ground_truth.has_value());
}

TEST(Dataset, MissingSourceGetsDescriptor) {
    std::istringstream in(R"({"id":"x","language":"en","turns":[{"role":"user","text":"hi"}]})" "\n");
    auto data = corpus::parse_dataset(in, "ED");
    EXPECT_EQ(data[0].source, "ED");
}

TEST(Dataset, MalformedLineReportsLineNumber) {
    try {
        corpus::load_dataset(fixture("bad_record.jsonl"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Dataset, RejectsDuplicateIdsAndBrokenInvariants) {
    std::istringstream dup(
        R"({"id":"a","language":"en","turns":[{"role":"user","text":"x"}]})" "\n"
        R"({"id":"a","language":"en","turns":[{"role":"user","text":"y"}]})" "\n");
    EXPECT_THROW(corpus::parse_dataset(dup), ParseError);
    std::istringstream empty_turn(R"({"id":"a","language":"en","turns":[{"role":"user","text":"  "}]})");
    EXPECT_THROW(corpus::parse_dataset(empty_turn), ParseError);
    std::istringstream no_turns(R"({"id":"a","language":"en","turns":[]})");
    EXPECT_THROW(corpus::parse_dataset(no_turns), ParseError);
    std::istringstream bad_role(R"({"id":"a","language":"en","turns":[{"role":"bot","text":"x"}]})");
    EXPECT_THROW(corpus::parse_dataset(bad_role), ParseError);
}

TEST(Dataset, SkipsBlankLines) {
    std::istringstream in("\n" R"({"id":"a","language":"en","turns":[{"role":"user","text":"x"}]})" "\n\n");
    EXPECT_EQ(corpus::parse_dataset(in).size(), 1u);
}

TEST(Dataset, SerializeRoundTrips) {
    auto data = corpus::load_dataset(fixture("mini.jsonl"));
    std::istringstream in(corpus::serialize_dataset(data));
    EXPECT_EQ(corpus::parse_dataset(in), data);
}

TEST(Dataset, DigestIsSha256OfBytes) {
    TempDir dir;
    cuecot::testing::write_file(dir / "f.txt", "abc");
    EXPECT_EQ(corpus::file_digest(dir / "f.txt"),
              "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Stats, HandCountedEnglish) {
    std::vector<Dialogue> d = {
        make("1", Language::En, {{Role::User, "a b c"}, {Role::System, "d e"}}, "x y z w"),
        make("2", Language::En, {{Role::User, "one"}}),
    };
    auto s = corpus::compute_stats(d);
    EXPECT_EQ(s.samples, 2u);
    EXPECT_EQ(s.with_response, 1u);
    EXPECT_DOUBLE_EQ(s.avg_context_len, 3.0);
    EXPECT_DOUBLE_EQ(s.avg_response_len, 4.0);
    EXPECT_EQ(s.unit, corpus::LengthUnit::Tokens);
}

TEST(Stats, ChineseCountsCharacters) {
    std::vector<Dialogue> d = {
        make("1", Language::Zh, {{Role::User, "你好吗"}, {Role::System, "很好"}}, "谢谢"),
    };
    auto s = corpus::compute_stats(d);
    EXPECT_DOUBLE_EQ(s.avg_context_len, 5.0);
    EXPECT_DOUBLE_EQ(s.avg_response_len, 2.0);
    EXPECT_EQ(s.unit, corpus::LengthUnit::Chars);
}

TEST(Stats, MiniFixtureHandCount) {
    // en-1: 7 + 10 + 10 tokens, zh-1: 17 + 20 + 17 chars, en-2: 9 tokens.
    // Responses: 16 tokens, 29 chars, 17 tokens.
    auto s = corpus::compute_stats(corpus::load_dataset(fixture("mini.jsonl")));
    EXPECT_DOUBLE_EQ(s.avg_context_len, 90.0 / 3.0);
    EXPECT_DOUBLE_EQ(s.avg_response_len, 62.0 / 3.0);
    EXPECT_EQ(s.unit, corpus::LengthUnit::Mixed);
}

TEST(Stats, OrderIndependent) {
    auto data = corpus::load_dataset(fixture("mini.jsonl"));
    auto a = corpus::compute_stats(data);
    std::reverse(data.begin(), data.end());
    auto b = corpus::compute_stats(data);
    EXPECT_EQ(a.avg_context_len, b.avg_context_len);
    EXPECT_EQ(a.avg_response_len, b.avg_response_len);
}

TEST(Stats, EmptyDatasetIsAnError) {
    EXPECT_THROW(corpus::compute_stats(std::vector<Dialogue>{}), ValidationError);
}

namespace {

Dialogue d4_dialogue() {
    Dialogue d;
    d.id = "d4-1";
    d.language = Language::Zh;
    d.turns = {
        {Role::System, "你好，有什么可以帮你？", std::string("greeting")},
        {Role::User, "我最近总是失眠。", std::nullopt},
        {Role::System, "别担心。", std::string("empathic comfort")},
        {Role::User, "可是已经一个月了。", std::nullopt},
        {Role::System, "一个月确实很辛苦，你愿意说说原因吗？", std::string("empathic comfort")},
        {Role::User, "工作压力大。", std::nullopt},
        {Role::System, "这种情况很常见，我们一起来想办法吧？", std::string("empathic comfort")},
    };
    return d;
}

}  // namespace

TEST(D4, PicksLongestEmpathicComfortEarliestOnTies) {
    // Turns 4 and 6 both have 18 characters; the earlier one wins.
    auto s = corpus::extract_d4_ground_truth(d4_dialogue());
    EXPECT_EQ(s.response_index, 4u);
    EXPECT_EQ(s.context.size(), 4u);
    EXPECT_EQ(s.response, "一个月确实很辛苦，你愿意说说原因吗？");
}

TEST(D4, NoLabelMeansSkip) {
    auto d = d4_dialogue();
    for (auto& t : d.turns) t.label.reset();
    EXPECT_THROW(corpus::extract_d4_ground_truth(d), ValidationError);
}

TEST(D4, BenchmarkDialogueEndsWithUser) {
    auto b = corpus::to_d4_benchmark(d4_dialogue());
    EXPECT_TRUE(b.ends_with_user());
    EXPECT_EQ(*b.ground_truth, "一个月确实很辛苦，你愿意说说原因吗？");
}

TEST(PsyQA, DescriptionBecomesLeadingUserTurn) {
    auto d = corpus::make_psyqa_dialogue("q1", "我是一名大学生。", "怎么缓解焦虑？", "试试规律作息。");
    ASSERT_EQ(d.turns.size(), 2u);
    EXPECT_EQ(d.turns[0].text, "我是一名大学生。");
    EXPECT_EQ(d.turns[1].text, "怎么缓解焦虑？");
    EXPECT_EQ(*d.ground_truth, "试试规律作息。");
    auto no_desc = corpus::make_psyqa_dialogue("q2", " ", "怎么办？", "休息。");
    EXPECT_EQ(no_desc.turns.size(), 1u);
}

TEST(Sampling, PerGroupCountsAndDeterminism) {
    std::vector<Dialogue> data;
    for (int i = 0; i < 30; ++i) {
        auto d = make("d" + std::to_string(i), Language::En, {{Role::User, "hi"}}, std::string(i % 5 + 1, 'x'));
        d.source = i % 3 == 0 ? "a" : "b";
        data.push_back(d);
    }
    auto group = [](const Dialogue& d) { return d.source; };
    auto s1 = corpus::sample_per_group(data, 4, 11, group);
    auto s2 = corpus::sample_per_group(data, 4, 11, group);
    EXPECT_EQ(s1, s2);
    std::map<std::string, int> counts;
    for (const auto& d : s1) ++counts[d.source];
    EXPECT_EQ(counts["a"], 4);
    EXPECT_EQ(counts["b"], 4);
    auto big = corpus::sample_per_group(data, 100, 11, group);
    EXPECT_EQ(big.size(), 30u);
}

TEST(Transcript, ParsesAlternatingTurns) {
    auto turns = corpus::parse_transcript("[Human] I still feel stuck.\n[AI] What have you tried?\n[Human] Lists.\n");
    ASSERT_EQ(turns.size(), 3u);
    EXPECT_EQ(turns[0].role, Role::User);
    EXPECT_EQ(turns[1].text, "What have you tried?");
}

TEST(Transcript, StopsAtFirstViolation) {
    auto turns = corpus::parse_transcript("[Human] a\n[AI] b\n[AI] c\n[Human] d");
    EXPECT_EQ(turns.size(), 2u);
    auto empty_body = corpus::parse_transcript("[Human] a\n[AI]   \n[Human] c");
    EXPECT_EQ(empty_body.size(), 1u);
}

TEST(Transcript, RejectsMissingMarkersOrWrongStart) {
    EXPECT_THROW(corpus::parse_transcript("no markers here"), ValidationError);
    EXPECT_THROW(corpus::parse_transcript("[AI] starts with the system"), ValidationError);
}

TEST(Construction, BuildsDialogueFromSeed) {
    auto backend = llm::MockBackend::from_json(json{
        {"rules",
         {{{"tag", "persona_infer"}, {"reply", "An anxious graduate student."}},
          {{"tag", "dialogue_continue"}, {"reply", "[Human] I tried that.\n[AI] What happened?\n[Human] I gave up."}}}}});
    llm::LlmClient client(backend);
    auto params = llm::generation_params("mock", 2048);
    auto seeds = corpus::load_seeds(fixture("seeds.jsonl"));
    ASSERT_EQ(seeds.size(), 2u);
    auto persona = corpus::infer_persona(seeds[0], client, params);
    EXPECT_EQ(persona.text, "An anxious graduate student.");
    auto d = corpus::continue_dialogue(seeds[0], persona, client, params);
    ASSERT_EQ(d.turns.size(), 5u);
    EXPECT_EQ(d.turns[0].text, seeds[0].question);
    EXPECT_EQ(d.turns[1].text, seeds[0].answer);
    EXPECT_TRUE(d.ends_with_user());
    EXPECT_EQ(backend->calls(), 2u);
}

TEST(Construction, SplitLastResponseMovesTrailingSystemTurn) {
    auto d = make("x", Language::En, {{Role::User, "q"}, {Role::System, "a"}, {Role::User, "q2"}, {Role::System, "a2"}});
    auto s = corpus::split_last_response(d);
    EXPECT_EQ(s.turns.size(), 3u);
    EXPECT_EQ(*s.ground_truth, "a2");
    auto unchanged = corpus::split_last_response(s);
    EXPECT_EQ(unchanged, s);
}
