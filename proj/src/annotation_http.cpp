#include "cuecot/annotation.hpp"

#include "cuecot/error.hpp"

#include "httplib.h"

namespace cuecot::annotation {

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const json::exception& e) {
            reply(res, 400, {{"error", std::string("malformed request body: ") + e.what()}});
        } catch (const NotFoundError& e) {
            reply(res, 404, {{"error", e.what()}});
        } catch (const ConflictError& e) {
            reply(res, 409, {{"error", e.what()}});
        } catch (const ValidationError& e) {
            reply(res, 422, {{"error", e.what()}});
        } catch (const std::exception& e) {
            reply(res, 500, {{"error", e.what()}});
        }
    };
}

HumanJudgment parse_judgment(const json& body) {
    HumanJudgment j;
    j.pair_id = body.at("pair_id").get<std::string>();
    j.annotator_id = body.at("annotator_id").get<std::string>();
    const auto& value = body.at("value");
    if (!value.is_number_integer()) throw ValidationError("judgment value must be the integer 1 or -1");
    j.value = value.get<int>();
    j.round = body.value("round", 0);
    return j;
}

}  // namespace

AnnotationServer::AnnotationServer(AnnotationStore& store,
                                   std::optional<std::filesystem::path> static_dir)
    : store_(store), server_(std::make_unique<httplib::Server>()) {
    routes();
    if (static_dir) {
        if (!server_->set_mount_point("/", static_dir->string())) {
            throw ValidationError("static directory not found: " + static_dir->string());
        }
    }
}

AnnotationServer::~AnnotationServer() { stop(); }

void AnnotationServer::routes() {
    server_->Get(R"(/api/annotators/([^/]+)/next)",
                 guarded([this](const httplib::Request& req, httplib::Response& res) {
                     auto pair = store_.next_pair(req.matches[1]);
                     if (!pair) {
                         auto progress = store_.progress();
                         const auto& mine = progress.annotators.at(req.matches[1]);
                         reply(res, 200,
                               {{"done", true},
                                {"round", progress.round},
                                {"progress", {{"done", mine.done}, {"total", mine.total}}}});
                         return;
                     }
                     json body = to_wire(*pair);
                     body["done"] = false;
                     reply(res, 200, body);
                 }));

    server_->Post("/api/judgments",
                  guarded([this](const httplib::Request& req, httplib::Response& res) {
                      auto stored = store_.submit_judgment(parse_judgment(json::parse(req.body)));
                      reply(res, 200,
                            {{"status", "accepted"},
                             {"pair_id", stored.pair_id},
                             {"annotator_id", stored.annotator_id},
                             {"round", stored.round},
                             {"value", stored.value}});
                  }));

    server_->Get("/api/progress", guarded([this](const httplib::Request&, httplib::Response& res) {
                     reply(res, 200, to_wire(store_.progress()));
                 }));

    server_->Post("/api/rounds/requeue-ties",
                  guarded([this](const httplib::Request& req, httplib::Response& res) {
                      json body = json::parse(req.body);
                      const json& list = body.is_array() ? body : body.at("records");
                      auto records = list.get<std::vector<eval::JudgmentRecord>>();
                      auto round = store_.requeue_ties(records);
                      reply(res, 200, {{"round", round.number}, {"pairs", round.pair_ids.size()}});
                  }));
}

int AnnotationServer::bind(const std::string& host, int port) {
    if (port == 0) {
        int bound = server_->bind_to_any_port(host);
        if (bound < 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!server_->bind_to_port(host, port)) {
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void AnnotationServer::serve() { server_->listen_after_bind(); }

void AnnotationServer::stop() {
    if (server_) server_->stop();
}

}  // namespace cuecot::annotation
