#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "nh/core/error.hpp"
#include "nh/svc/config.hpp"
#include "nh/svc/pipeline.hpp"

namespace httplib {
class Server;
}

namespace nh::svc {

// HTTP status for an error category (400 unless listed):
//   NotFound 404, ModelNotLoaded 409, DimensionMismatch 422.
int http_status(ErrorCode code);
// {"error": {"code": "...", "message": "..."}}
nlohmann::json error_json(ErrorCode code, const std::string& message);

struct AnimateRequest {
    VisemeSequence visemes;
    Eigen::VectorXf style;
};
// Body: {"phn": "<.phn text>" | "viseme_ids": [...],
//        "style_point": [x, y] | "style_vec": [...]}
AnimateRequest parse_animate_request(const nlohmann::json& body, const Pipeline& pipeline);

std::string base64(const std::vector<unsigned char>& bytes);

// Job store plus render workers around a read-only pipeline. The pipeline may
// be null, in which case model endpoints answer 409.
class Service {
public:
    Service(std::shared_ptr<const Pipeline> pipeline, const ServeConfig& config);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void mount(httplib::Server& server);

private:
    struct Job {
        std::string state = "queued";  // queued, running, done, failed
        AnimateRequest request;
        std::string params;  // serialised traces once animated
        int frames = 0;
        std::vector<std::vector<unsigned char>> pngs;  // rendered so far
        nlohmann::json error;
    };

    std::shared_ptr<Job> find(const std::string& id);
    nlohmann::json job_status(const Job& job) const;
    nlohmann::json style_grid(int n) const;
    void work();

    std::shared_ptr<const Pipeline> pipeline_;
    ServeConfig config_;
    std::mutex mutex_;
    std::condition_variable wake_;
    std::map<std::string, std::shared_ptr<Job>> jobs_;
    std::deque<std::shared_ptr<Job>> queue_;
    long next_id_ = 1;
    bool stop_ = false;
    std::vector<std::thread> workers_;
};

}  // namespace nh::svc
