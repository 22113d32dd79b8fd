#include "cuecot/annotation.hpp"
#include "cuecot/error.hpp"

#include "test_util.hpp"

#include "httplib.h"

#include <gtest/gtest.h>

#include <set>
#include <thread>

using namespace cuecot;
using namespace cuecot::annotation;
using cuecot::testing::TempDir;

namespace {

std::vector<PairSource> make_pairs(int n, Metric metric = Metric::Helpfulness) {
    std::vector<PairSource> out;
    for (int i = 0; i < n; ++i) {
        PairSource p;
        p.sample_id = "q" + std::to_string(i);
        p.metric = metric;
        p.context.id = p.sample_id;
        p.context.turns = {Turn{Role::User, "Question " + std::to_string(i) + "?", std::nullopt}};
        p.response_s = "cue answer " + std::to_string(i);
        p.response_o = "plain answer " + std::to_string(i);
        out.push_back(std::move(p));
    }
    return out;
}

StoreConfig two_annotators(std::uint64_t seed = 9) {
    StoreConfig c;
    c.annotators = {"alice", "bob"};
    c.seed = seed;
    return c;
}

eval::JudgmentRecord machine(const std::string& id, double first, double second) {
    eval::JudgmentRecord r;
    r.sample_id = id;
    r.score_first = first;
    r.score_second = second;
    r.decision = eval::decide(r.score_s(), r.score_o());
    return r;
}

// Judges every pair left for `annotator`, preferring S.
std::size_t drain(AnnotationStore& store, const std::string& annotator) {
    std::size_t n = 0;
    while (auto p = store.next_pair(annotator)) {
        store.submit_judgment({p->pair_id, annotator, p->left_is_s ? 1 : -1, 0});
        ++n;
    }
    return n;
}

}  // namespace

TEST(Store, QueueExhaustsAfterEveryPair) {
    AnnotationStore store(make_pairs(7), two_annotators());
    std::set<std::string> seen;
    std::size_t done = 0;
    while (auto p = store.next_pair("alice")) {
        EXPECT_EQ(p->done, done);
        EXPECT_EQ(p->total, 7u);
        EXPECT_TRUE(seen.insert(p->pair_id).second);
        store.submit_judgment({p->pair_id, "alice", 1, 0});
        ++done;
    }
    EXPECT_EQ(seen.size(), 7u);
    EXPECT_EQ(store.progress().annotators.at("alice").done, 7u);
    EXPECT_EQ(store.progress().annotators.at("bob").done, 0u);
    EXPECT_TRUE(store.next_pair("bob").has_value());
}

TEST(Store, HeadIsStableUntilJudged) {
    AnnotationStore store(make_pairs(5), two_annotators());
    auto a = store.next_pair("alice");
    auto b = store.next_pair("alice");
    ASSERT_TRUE(a && b);
    EXPECT_EQ(a->pair_id, b->pair_id);
    EXPECT_EQ(a->left, b->left);
    store.submit_judgment({a->pair_id, "alice", -1, 0});
    EXPECT_NE(store.next_pair("alice")->pair_id, a->pair_id);
}

TEST(Store, OrderAndSlotsAreSeededPerAnnotator) {
    AnnotationStore one(make_pairs(30), two_annotators(1));
    AnnotationStore same(make_pairs(30), two_annotators(1));
    EXPECT_EQ(one.next_pair("alice")->pair_id, same.next_pair("alice")->pair_id);
    std::vector<std::string> qa, qb;
    while (auto p = one.next_pair("alice")) {
        qa.push_back(p->pair_id);
        one.submit_judgment({p->pair_id, "alice", 1, 0});
    }
    while (auto p = one.next_pair("bob")) {
        qb.push_back(p->pair_id);
        one.submit_judgment({p->pair_id, "bob", 1, 0});
    }
    EXPECT_NE(qa, qb);
    std::size_t left_s = 0;
    for (int i = 0; i < 200; ++i) left_s += assign_left_is_s(4, "p" + std::to_string(i), "alice", 1);
    EXPECT_GT(left_s, 60u);
    EXPECT_LT(left_s, 140u);
}

TEST(Store, ValueIsTranslatedRelativeToS) {
    AnnotationStore store(make_pairs(40), two_annotators());
    bool saw_left = false, saw_right = false;
    while (auto p = store.next_pair("alice")) {
        auto stored = store.submit_judgment({p->pair_id, "alice", 1, 0});
        EXPECT_EQ(stored.left_is_s, p->left_is_s);
        if (p->left_is_s) {
            saw_left = true;
            EXPECT_EQ(stored.s_value, 1);
            EXPECT_EQ(stored.decision(), eval::Decision::Win);
            EXPECT_NE(p->left.find("cue answer"), std::string::npos);
        } else {
            saw_right = true;
            EXPECT_EQ(stored.s_value, -1);
            EXPECT_EQ(stored.decision(), eval::Decision::Lose);
            EXPECT_NE(p->right.find("cue answer"), std::string::npos);
        }
    }
    EXPECT_TRUE(saw_left && saw_right);
}

TEST(Store, ExportedLabelsIgnoreSlotPlacement) {
    // An annotator who always prefers S must export all +1 regardless of slots.
    AnnotationStore store(make_pairs(25), two_annotators(123));
    drain(store, "alice");
    auto labels = store.export_labels();
    ASSERT_EQ(labels.size(), 25u);
    for (const auto& l : labels) {
        EXPECT_EQ(l.value, 1);
        EXPECT_EQ(l.annotator, "alice");
    }
    // Agreement against an all-win machine is identical under any seed.
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        AnnotationStore other(make_pairs(25), two_annotators(seed));
        drain(other, "alice");
        std::vector<int> h, m;
        for (const auto& l : other.export_labels()) {
            h.push_back(l.value);
            m.push_back(1);
        }
        auto a = eval::agreement(h, m);
        EXPECT_DOUBLE_EQ(a.accuracy, 1.0);
    }
}

TEST(Store, RejectsBadSubmissions) {
    AnnotationStore store(make_pairs(3), two_annotators());
    auto p = store.next_pair("alice");
    EXPECT_THROW(store.next_pair("mallory"), NotFoundError);
    EXPECT_THROW(store.submit_judgment({p->pair_id, "mallory", 1, 0}), NotFoundError);
    EXPECT_THROW(store.submit_judgment({p->pair_id, "alice", 0, 0}), ValidationError);
    EXPECT_THROW(store.submit_judgment({p->pair_id, "alice", 2, 0}), ValidationError);
    EXPECT_THROW(store.submit_judgment({"nope:helpfulness", "alice", 1, 0}), NotFoundError);
    EXPECT_THROW(store.submit_judgment({p->pair_id, "alice", 1, 5}), NotFoundError);
    store.submit_judgment({p->pair_id, "alice", 1, 0});
    EXPECT_THROW(store.submit_judgment({p->pair_id, "alice", -1, 0}), ConflictError);
    EXPECT_NO_THROW(store.submit_judgment({p->pair_id, "bob", -1, 1}));
    EXPECT_EQ(store.judgments().size(), 2u);
}

TEST(Store, RequeueTiesOpensFreshRound) {
    auto pairs = make_pairs(20);
    AnnotationStore store(pairs, two_annotators());
    drain(store, "alice");
    drain(store, "bob");
    std::vector<eval::JudgmentRecord> records;
    for (int i = 0; i < 20; ++i) records.push_back(machine("q" + std::to_string(i), i < 10 ? 5 : 4, 5));
    records.push_back(machine("outside-sample", 5, 5));
    auto round = store.requeue_ties(records);
    EXPECT_EQ(round.number, 2);
    EXPECT_EQ(round.pair_ids.size(), 10u);
    EXPECT_EQ(store.current_round(), 2);
    EXPECT_EQ(store.progress().annotators.at("alice").total, 10u);
    std::set<std::string> requeued(round.pair_ids.begin(), round.pair_ids.end());
    while (auto p = store.next_pair("alice")) {
        EXPECT_EQ(p->round, 2);
        EXPECT_TRUE(requeued.count(p->pair_id));
        EXPECT_EQ(p->left_is_s, assign_left_is_s(store.seed(), p->pair_id, "alice", 2));
        store.submit_judgment({p->pair_id, "alice", p->left_is_s ? -1 : 1, 0});
    }
    EXPECT_EQ(drain(store, "alice"), 0u);
    // Latest round wins in the export: alice now prefers O on the requeued pairs.
    std::size_t negative = 0;
    for (const auto& l : store.export_labels()) {
        if (l.annotator != "alice") continue;
        EXPECT_EQ(l.value, requeued.count(l.sample_id + ":helpfulness") ? -1 : 1);
        negative += l.value < 0;
    }
    EXPECT_EQ(negative, 10u);
    std::size_t changed = 0;
    for (int i = 0; i < 100; ++i) {
        auto id = "q" + std::to_string(i) + ":helpfulness";
        changed += assign_left_is_s(store.seed(), id, "alice", 1) != assign_left_is_s(store.seed(), id, "alice", 2);
    }
    EXPECT_GT(changed, 20u);

    auto empty = store.requeue_ties(std::vector<eval::JudgmentRecord>{machine("q0", 1, 9)});
    EXPECT_EQ(empty.number, 3);
    EXPECT_TRUE(empty.pair_ids.empty());
    EXPECT_FALSE(store.next_pair("alice").has_value());
    EXPECT_EQ(store.rounds().size(), 3u);
}

TEST(Store, PersistsAcrossReopen) {
    TempDir dir;
    {
        auto store = AnnotationStore::create(dir.path(), make_pairs(6), two_annotators());
        auto p = store->next_pair("alice");
        store->submit_judgment({p->pair_id, "alice", 1, 0});
        p = store->next_pair("alice");
        store->submit_judgment({p->pair_id, "alice", -1, 0});
        EXPECT_THROW(AnnotationStore::create(dir.path(), make_pairs(6), two_annotators()), ConflictError);
    }
    for (const char* f : {"meta.json", "pairs.jsonl", "judgments.jsonl", "snapshot.json"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    auto reopened = AnnotationStore::open(dir.path());
    EXPECT_EQ(reopened->judgments().size(), 2u);
    EXPECT_EQ(reopened->progress().annotators.at("alice").done, 2u);
    auto head = reopened->next_pair("alice");
    ASSERT_TRUE(head);
    EXPECT_EQ(head->done, 2u);
    reopened->submit_judgment({head->pair_id, "alice", 1, 0});
    reopened.reset();
    EXPECT_EQ(AnnotationStore::open(dir.path())->judgments().size(), 3u);
    EXPECT_THROW(AnnotationStore::open(dir / "missing"), Error);
}

TEST(Wire, CarriesNoProvenance) {
    AnnotationStore store(make_pairs(3), two_annotators());
    auto p = store.next_pair("alice");
    auto wire = to_wire(*p).dump();
    for (const char* banned : {"left_is_s", "response_s", "response_o", "m_cue", "o_cue", "standard", "\"S\"",
                               "cue_cot", "scheme"}) {
        EXPECT_EQ(wire.find(banned), std::string::npos) << banned << " in " << wire;
    }
    auto j = to_wire(*p);
    for (const char* key : {"pair_id", "round", "metric", "context", "left", "right", "progress"}) {
        EXPECT_TRUE(j.contains(key)) << key;
    }
    EXPECT_EQ(j.size(), 7u);
}

class HttpApi : public ::testing::Test {
protected:
    void SetUp() override {
        store_ = std::make_unique<AnnotationStore>(make_pairs(4), two_annotators());
        server_ = std::make_unique<AnnotationServer>(*store_);
        port_ = server_->bind("127.0.0.1", 0);
        thread_ = std::thread([this] { server_->serve(); });
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
        client_->set_connection_timeout(std::chrono::seconds(5));
        // Wait until the listener accepts.
        for (int i = 0; i < 100 && !client_->Get("/api/progress"); ++i) {
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
    }
    void TearDown() override {
        server_->stop();
        thread_.join();
    }

    httplib::Result post(const std::string& path, const json& body) {
        return client_->Post(path, body.dump(), "application/json");
    }

    std::unique_ptr<AnnotationStore> store_;
    std::unique_ptr<AnnotationServer> server_;
    std::unique_ptr<httplib::Client> client_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(HttpApi, NextSubmitProgressRoundTrip) {
    auto res = client_->Get("/api/annotators/alice/next");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 200);
    auto pair = json::parse(res->body);
    EXPECT_FALSE(pair["done"].get<bool>());
    EXPECT_FALSE(pair.contains("left_is_s"));
    EXPECT_EQ(pair["progress"]["total"], 4);

    auto ok = post("/api/judgments", {{"pair_id", pair["pair_id"]}, {"annotator_id", "alice"}, {"value", 1}});
    ASSERT_TRUE(ok);
    EXPECT_EQ(ok->status, 200);
    auto body = json::parse(ok->body);
    EXPECT_EQ(body["status"], "accepted");
    EXPECT_EQ(body["round"], 1);
    EXPECT_FALSE(body.contains("left_is_s"));
    EXPECT_FALSE(body.contains("s_value"));

    auto dup = post("/api/judgments", {{"pair_id", pair["pair_id"]}, {"annotator_id", "alice"}, {"value", 1}});
    EXPECT_EQ(dup->status, 409);

    auto progress = json::parse(client_->Get("/api/progress")->body);
    EXPECT_EQ(progress["round"], 1);
    EXPECT_EQ(progress["annotators"]["alice"]["done"], 1);
    EXPECT_EQ(progress["annotators"]["bob"]["done"], 0);
}

TEST_F(HttpApi, ErrorStatusCodes) {
    EXPECT_EQ(client_->Get("/api/annotators/mallory/next")->status, 404);
    auto pid = json::parse(client_->Get("/api/annotators/alice/next")->body)["pair_id"];
    EXPECT_EQ(post("/api/judgments", {{"pair_id", pid}, {"annotator_id", "alice"}, {"value", 0}})->status, 422);
    EXPECT_EQ(post("/api/judgments", {{"pair_id", pid}, {"annotator_id", "alice"}, {"value", "1"}})->status, 422);
    EXPECT_EQ(post("/api/judgments", {{"pair_id", "x:helpfulness"}, {"annotator_id", "alice"}, {"value", 1}})->status,
              404);
    EXPECT_EQ(client_->Post("/api/judgments", "{not json", "application/json")->status, 400);
    EXPECT_EQ(post("/api/judgments", {{"annotator_id", "alice"}})->status, 400);
    EXPECT_EQ(client_->Get("/api/nothing-here")->status, 404);
}

TEST_F(HttpApi, DoneAndRequeue) {
    while (true) {
        auto j = json::parse(client_->Get("/api/annotators/bob/next")->body);
        if (j["done"].get<bool>()) {
            EXPECT_EQ(j["progress"]["done"], 4);
            break;
        }
        ASSERT_EQ(post("/api/judgments", {{"pair_id", j["pair_id"]}, {"annotator_id", "bob"}, {"value", -1}})->status,
                  200);
    }
    json records = json::array({json(machine("q1", 5, 5)), json(machine("q2", 5, 5)), json(machine("q3", 1, 5))});
    auto res = post("/api/rounds/requeue-ties", {{"records", records}});
    ASSERT_EQ(res->status, 200);
    auto body = json::parse(res->body);
    EXPECT_EQ(body["round"], 2);
    EXPECT_EQ(body["pairs"], 2);
    auto next = json::parse(client_->Get("/api/annotators/bob/next")->body);
    EXPECT_FALSE(next["done"].get<bool>());
    EXPECT_EQ(next["round"], 2);
    EXPECT_EQ(next["progress"]["total"], 2);
}

TEST(HttpStatic, ServesStaticDirectory) {
    TempDir dir;
    cuecot::testing::write_file(dir / "index.html", "<html>ui</html>");
    AnnotationStore store(make_pairs(1), two_annotators());
    AnnotationServer server(store, dir.path());
    int port = server.bind("127.0.0.1", 0);
    std::thread t([&] { server.serve(); });
    httplib::Client client("127.0.0.1", port);
    httplib::Result res;
    for (int i = 0; i < 100 && !(res = client.Get("/index.html")); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    server.stop();
    t.join();
    ASSERT_TRUE(res);
    EXPECT_EQ(res->body, "<html>ui</html>");
    EXPECT_THROW(AnnotationServer(store, dir / "missing"), ValidationError);
}
