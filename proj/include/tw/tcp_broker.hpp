#pragma once

#include "tw/broker.hpp"

#include <atomic>
#include <cstdint>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace tw {

// Exposes a Broker over TCP. Protocol: one JSON object per line in each
// direction, ops enqueue / dequeue / ack / parked / pending, payloads
// base64. See the README for the field-by-field schema.
class TcpBrokerServer {
  public:
    // Binds 127.0.0.1:port (0 picks a free port) and starts serving.
    TcpBrokerServer(Broker& broker, uint16_t port = 0);
    ~TcpBrokerServer();

    uint16_t port() const { return port_; }
    void stop();

  private:
    void accept_loop();
    void serve_connection(int fd);

    Broker& broker_;
    uint16_t port_ = 0;
    int listen_fd_ = -1;
    std::atomic<bool> stopping_{false};
    std::thread accept_thread_;
    std::mutex threads_mutex_;
    std::vector<std::thread> connection_threads_;
    std::vector<int> connection_fds_;
};

// Broker interface over one TCP connection. Operations are serialized on
// the connection; use one client per worker thread.
class TcpBrokerClient final : public Broker {
  public:
    explicit TcpBrokerClient(const std::string& address);  // "host:port"
    ~TcpBrokerClient() override;

    void enqueue(const std::string& queue, const JobEnvelope& envelope) override;
    std::optional<JobEnvelope> dequeue(const std::string& queue, const std::string& worker_id,
                                       double lease_s, double wait_s) override;
    void ack(const std::string& queue, const std::string& job_id) override;
    std::vector<JobEnvelope> parked(const std::string& queue) override;
    size_t pending(const std::string& queue) override;

  private:
    std::string roundtrip(const std::string& line);

    int fd_ = -1;
    std::string buffer_;
    std::mutex mutex_;
};

}  // namespace tw
