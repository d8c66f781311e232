#include "tw/tcp_broker.hpp"

#include "tw/base64.hpp"

#include <nlohmann/json.hpp>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace tw {

namespace {

constexpr int kProtocolVersion = 1;

nlohmann::json job_to_json(const JobEnvelope& e) {
    return {{"job_id", e.job_id},
            {"kind", e.kind},
            {"payload_b64",
             base64_encode(reinterpret_cast<const uint8_t*>(e.payload.data()), e.payload.size())},
            {"correlation_id", e.correlation_id},
            {"reply_to", e.reply_to},
            {"attempt", e.attempt},
            {"enqueued_at_s", e.enqueued_at_s}};
}

JobEnvelope job_from_json(const nlohmann::json& j) {
    JobEnvelope e;
    e.job_id = j.at("job_id").get<std::string>();
    e.kind = j.value("kind", "");
    const auto payload = base64_decode(j.value("payload_b64", ""));
    e.payload.assign(payload.begin(), payload.end());
    e.correlation_id = j.value("correlation_id", "");
    e.reply_to = j.value("reply_to", "");
    e.attempt = j.value("attempt", 0);
    e.enqueued_at_s = j.value("enqueued_at_s", 0.0);
    return e;
}

bool send_all(int fd, const std::string& data) {
    size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n <= 0) return false;
        sent += static_cast<size_t>(n);
    }
    return true;
}

// Reads until '\n'; returns false on EOF/error.
bool recv_line(int fd, std::string& buffer, std::string& line) {
    for (;;) {
        if (const size_t pos = buffer.find('\n'); pos != std::string::npos) {
            line = buffer.substr(0, pos);
            buffer.erase(0, pos + 1);
            return true;
        }
        char chunk[4096];
        const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
        if (n <= 0) return false;
        buffer.append(chunk, static_cast<size_t>(n));
    }
}

}  // namespace

TcpBrokerServer::TcpBrokerServer(Broker& broker, uint16_t port) : broker_(broker) {
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw std::runtime_error("broker server: socket() failed");
    const int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));

    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(listen_fd_);
        throw std::runtime_error("broker server: bind failed");
    }
    socklen_t len = sizeof(addr);
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
    if (::listen(listen_fd_, 64) != 0) {
        ::close(listen_fd_);
        throw std::runtime_error("broker server: listen failed");
    }
    accept_thread_ = std::thread([this] { accept_loop(); });
}

TcpBrokerServer::~TcpBrokerServer() { stop(); }

void TcpBrokerServer::stop() {
    bool expected = false;
    if (!stopping_.compare_exchange_strong(expected, true)) return;
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    if (accept_thread_.joinable()) accept_thread_.join();
    std::vector<std::thread> threads;
    {
        std::lock_guard lock(threads_mutex_);
        for (int fd : connection_fds_) ::shutdown(fd, SHUT_RDWR);
        threads.swap(connection_threads_);
    }
    for (std::thread& t : threads) {
        if (t.joinable()) t.join();
    }
}

void TcpBrokerServer::accept_loop() {
    for (;;) {
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) return;  // listener closed
        std::lock_guard lock(threads_mutex_);
        connection_fds_.push_back(fd);
        connection_threads_.emplace_back([this, fd] { serve_connection(fd); });
    }
}

void TcpBrokerServer::serve_connection(int fd) {
    std::string buffer;
    std::string line;
    while (!stopping_.load() && recv_line(fd, buffer, line)) {
        nlohmann::json reply;
        try {
            const nlohmann::json req = nlohmann::json::parse(line);
            if (req.value("v", kProtocolVersion) > kProtocolVersion) {
                throw std::runtime_error("unsupported protocol version");
            }
            const std::string op = req.at("op").get<std::string>();
            const std::string queue = req.at("queue").get<std::string>();
            if (op == "enqueue") {
                broker_.enqueue(queue, job_from_json(req));
                reply = {{"ok", true}};
            } else if (op == "dequeue") {
                const double lease_s = req.value("lease_s", 30.0);
                double wait_s = req.value("wait_s", 0.0);
                std::optional<JobEnvelope> job;
                // Sliced wait so a stopping server lets go promptly.
                do {
                    const double slice = std::min(wait_s, 0.1);
                    job = broker_.dequeue(queue, req.value("worker_id", ""), lease_s, slice);
                    wait_s -= slice;
                } while (!job && wait_s > 0.0 && !stopping_.load());
                if (job) {
                    reply = job_to_json(*job);
                    reply["ok"] = true;
                    reply["found"] = true;
                } else {
                    reply = {{"ok", true}, {"found", false}};
                }
            } else if (op == "ack") {
                broker_.ack(queue, req.at("job_id").get<std::string>());
                reply = {{"ok", true}};
            } else if (op == "parked") {
                reply = {{"ok", true}, {"jobs", nlohmann::json::array()}};
                for (const JobEnvelope& e : broker_.parked(queue)) {
                    reply["jobs"].push_back(job_to_json(e));
                }
            } else if (op == "pending") {
                reply = {{"ok", true}, {"count", broker_.pending(queue)}};
            } else {
                throw std::runtime_error("unknown op '" + op + "'");
            }
        } catch (const std::exception& e) {
            reply = {{"ok", false}, {"error", e.what()}};
        }
        if (!send_all(fd, reply.dump() + "\n")) break;
    }
    ::close(fd);
}

TcpBrokerClient::TcpBrokerClient(const std::string& address) {
    const size_t colon = address.rfind(':');
    if (colon == std::string::npos) {
        throw std::invalid_argument("broker address must be host:port, got '" + address + "'");
    }
    const std::string host = address.substr(0, colon);
    const int port = std::stoi(address.substr(colon + 1));

    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw std::runtime_error("broker client: socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<uint16_t>(port));
    if (host == "localhost") {
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    } else if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd_);
        throw std::runtime_error("broker client: cannot parse host '" + host + "'");
    }
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
        ::close(fd_);
        throw std::runtime_error("broker at " + address + " unreachable");
    }
}

TcpBrokerClient::~TcpBrokerClient() {
    if (fd_ >= 0) ::close(fd_);
}

std::string TcpBrokerClient::roundtrip(const std::string& line) {
    std::lock_guard lock(mutex_);
    if (!send_all(fd_, line + "\n")) throw std::runtime_error("broker connection lost on send");
    std::string reply;
    if (!recv_line(fd_, buffer_, reply)) throw std::runtime_error("broker connection lost on recv");
    return reply;
}

namespace {

nlohmann::json check_ok(const std::string& reply) {
    nlohmann::json j = nlohmann::json::parse(reply);
    if (!j.value("ok", false)) {
        throw std::runtime_error("broker error: " + j.value("error", "unknown"));
    }
    return j;
}

}  // namespace

void TcpBrokerClient::enqueue(const std::string& queue, const JobEnvelope& envelope) {
    nlohmann::json req = job_to_json(envelope);
    req["v"] = kProtocolVersion;
    req["op"] = "enqueue";
    req["queue"] = queue;
    check_ok(roundtrip(req.dump()));
}

std::optional<JobEnvelope> TcpBrokerClient::dequeue(const std::string& queue,
                                                    const std::string& worker_id, double lease_s,
                                                    double wait_s) {
    const nlohmann::json req = {{"v", kProtocolVersion}, {"op", "dequeue"},   {"queue", queue},
                                {"worker_id", worker_id}, {"lease_s", lease_s}, {"wait_s", wait_s}};
    const nlohmann::json reply = check_ok(roundtrip(req.dump()));
    if (!reply.value("found", false)) return std::nullopt;
    return job_from_json(reply);
}

void TcpBrokerClient::ack(const std::string& queue, const std::string& job_id) {
    const nlohmann::json req = {
        {"v", kProtocolVersion}, {"op", "ack"}, {"queue", queue}, {"job_id", job_id}};
    check_ok(roundtrip(req.dump()));
}

std::vector<JobEnvelope> TcpBrokerClient::parked(const std::string& queue) {
    const nlohmann::json req = {{"v", kProtocolVersion}, {"op", "parked"}, {"queue", queue}};
    const nlohmann::json reply = check_ok(roundtrip(req.dump()));
    std::vector<JobEnvelope> out;
    for (const auto& j : reply.at("jobs")) out.push_back(job_from_json(j));
    return out;
}

size_t TcpBrokerClient::pending(const std::string& queue) {
    const nlohmann::json req = {{"v", kProtocolVersion}, {"op", "pending"}, {"queue", queue}};
    return check_ok(roundtrip(req.dump())).at("count").get<size_t>();
}

}  // namespace tw
