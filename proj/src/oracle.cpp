#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <string>
#include <vector>

#include <json.hpp>

#include "actmark/errors.hpp"
#include "actmark/wm_black.hpp"

namespace actmark::blackbox {

SubprocessOracle::SubprocessOracle(const std::string& command) {
    int to_child[2];    // parent writes -> child stdin
    int from_child[2];  // child stdout -> parent reads
    if (pipe(to_child) != 0 || pipe(from_child) != 0) {
        fail(ErrorCode::Protocol, "cannot create oracle pipes");
    }
    const pid_t pid = fork();
    if (pid < 0) fail(ErrorCode::Protocol, "cannot fork oracle process");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    to_child_ = fdopen(to_child[1], "w");
    from_child_ = fdopen(from_child[0], "r");
    if (!to_child_ || !from_child_) {
        fail(ErrorCode::Protocol, "cannot attach to oracle pipes");
    }
}

SubprocessOracle::~SubprocessOracle() {
    if (to_child_) fclose(to_child_);
    if (from_child_) fclose(from_child_);
    if (pid_ > 0) {
        int status = 0;
        waitpid(pid_, &status, 0);
    }
}

std::vector<std::int32_t> SubprocessOracle::predict(const Matrix& batch) const {
    std::lock_guard<std::mutex> lock(mutex_);

    nlohmann::json request;
    auto& inputs = request["inputs"];
    inputs = nlohmann::json::array();
    for (std::size_t i = 0; i < batch.rows; ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < batch.cols; ++j) row.push_back(batch.at(i, j));
        inputs.push_back(std::move(row));
    }
    const std::string line = request.dump();
    if (std::fputs(line.c_str(), to_child_) == EOF || std::fputc('\n', to_child_) == EOF ||
        std::fflush(to_child_) != 0) {
        fail(ErrorCode::Protocol, "oracle process closed its input");
    }

    std::string response;
    int ch;
    while ((ch = std::fgetc(from_child_)) != EOF && ch != '\n') {
        response.push_back(static_cast<char>(ch));
    }
    if (response.empty() && ch == EOF) {
        fail(ErrorCode::Protocol, "oracle process closed its output");
    }

    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(response);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::Protocol, std::string("oracle response is not valid JSON: ") +
                                      e.what());
    }
    if (!parsed.contains("labels") || !parsed["labels"].is_array()) {
        fail(ErrorCode::Protocol, "oracle response lacks a labels array");
    }
    std::vector<std::int32_t> labels;
    labels.reserve(parsed["labels"].size());
    for (const auto& v : parsed["labels"]) labels.push_back(v.get<std::int32_t>());
    return labels;
}

}  // namespace actmark::blackbox
