#pragma once

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "evex/error.hpp"

namespace evex {

/// A child process whose stdin/stdout are line-oriented pipes. stderr is inherited.
class LineProcess {
public:
    explicit LineProcess(const std::vector<std::string>& argv)
    {
        if (argv.empty()) throw ClassifierError(ClassifierError::Kind::SpawnFailed, "empty command line");
        // A child that dies mid-request must surface as an error, not kill us.
        static const bool sigpipe_ignored = (::signal(SIGPIPE, SIG_IGN), true);
        (void)sigpipe_ignored;

        int to_child[2];
        int from_child[2];
        int exec_status[2];
        if (::pipe2(to_child, O_CLOEXEC) != 0) spawn_error("pipe", errno);
        if (::pipe2(from_child, O_CLOEXEC) != 0) {
            close_pair(to_child);
            spawn_error("pipe", errno);
        }
        if (::pipe2(exec_status, O_CLOEXEC) != 0) {
            close_pair(to_child);
            close_pair(from_child);
            spawn_error("pipe", errno);
        }

        std::vector<char*> args;
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);

        pid_ = ::fork();
        if (pid_ < 0) {
            const int err = errno;
            close_pair(to_child);
            close_pair(from_child);
            close_pair(exec_status);
            spawn_error("fork", err);
        }
        if (pid_ == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::close(exec_status[0]);
            ::execvp(args[0], args.data());
            const int err = errno;
            [[maybe_unused]] auto n = ::write(exec_status[1], &err, sizeof(err));
            ::_exit(127);
        }

        ::close(to_child[0]);
        ::close(from_child[1]);
        ::close(exec_status[1]);
        stdin_fd_ = to_child[1];
        stdout_fd_ = from_child[0];

        // exec_status closes on successful exec; otherwise it carries errno.
        int child_errno = 0;
        ssize_t n;
        do {
            n = ::read(exec_status[0], &child_errno, sizeof(child_errno));
        } while (n < 0 && errno == EINTR);
        ::close(exec_status[0]);
        if (n == static_cast<ssize_t>(sizeof(child_errno))) {
            shutdown();
            throw ClassifierError(ClassifierError::Kind::SpawnFailed,
                                  "cannot execute '" + argv[0] + "': " + std::strerror(child_errno));
        }
    }

    LineProcess(const LineProcess&) = delete;
    LineProcess& operator=(const LineProcess&) = delete;

    ~LineProcess() { shutdown(); }

    void write_line(const std::string& line)
    {
        std::string data = line;
        data += '\n';
        const char* p = data.data();
        std::size_t left = data.size();
        while (left > 0) {
            const ssize_t n = ::write(stdin_fd_, p, left);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ClassifierError(ClassifierError::Kind::ProcessFailed,
                                      std::string("classifier stdin closed: ") + std::strerror(errno));
            }
            p += n;
            left -= static_cast<std::size_t>(n);
        }
    }

    /// Next line without its terminator; nullopt on end of stream.
    std::optional<std::string> read_line(std::chrono::milliseconds timeout)
    {
        const auto deadline = std::chrono::steady_clock::now() + timeout;
        for (;;) {
            if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            if (eof_) {
                if (buffer_.empty()) return std::nullopt;
                return std::exchange(buffer_, {});
            }
            const auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
                deadline - std::chrono::steady_clock::now());
            if (remaining.count() <= 0)
                throw ClassifierError(ClassifierError::Kind::Timeout, "classifier did not respond in time");
            pollfd pfd{stdout_fd_, POLLIN, 0};
            const int rc = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining.count(), 1 << 30)));
            if (rc < 0) {
                if (errno == EINTR) continue;
                throw ClassifierError(ClassifierError::Kind::ProcessFailed, std::string("poll: ") + std::strerror(errno));
            }
            if (rc == 0) continue;
            char chunk[1 << 16];
            const ssize_t n = ::read(stdout_fd_, chunk, sizeof(chunk));
            if (n < 0) {
                if (errno == EINTR) continue;
                throw ClassifierError(ClassifierError::Kind::ProcessFailed, std::string("read: ") + std::strerror(errno));
            }
            if (n == 0)
                eof_ = true;
            else
                buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    pid_t pid() const noexcept { return pid_; }

private:
    static void close_pair(int fds[2])
    {
        ::close(fds[0]);
        ::close(fds[1]);
    }

    [[noreturn]] static void spawn_error(const char* what, int err)
    {
        throw ClassifierError(ClassifierError::Kind::SpawnFailed, std::string(what) + ": " + std::strerror(err));
    }

    void shutdown() noexcept
    {
        if (stdin_fd_ >= 0) ::close(std::exchange(stdin_fd_, -1));
        if (stdout_fd_ >= 0) ::close(std::exchange(stdout_fd_, -1));
        if (pid_ <= 0) return;
        // Closing stdin ends the session; give the child a moment before killing it.
        for (int i = 0; i < 50; ++i) {
            int status = 0;
            const pid_t r = ::waitpid(pid_, &status, WNOHANG);
            if (r == pid_ || (r < 0 && errno != EINTR)) {
                pid_ = -1;
                return;
            }
            ::usleep(10000);
        }
        ::kill(pid_, SIGKILL);
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
        pid_ = -1;
    }

    pid_t pid_ = -1;
    int stdin_fd_ = -1;
    int stdout_fd_ = -1;
    std::string buffer_;
    bool eof_ = false;
};

} // namespace evex
