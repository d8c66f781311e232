#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace tw {

struct JobEnvelope {
    std::string job_id;
    std::string kind;     // e.g. "unroll", "weave"
    std::string payload;  // opaque bytes, serialized by the caller
    // Routing for request/reply traffic; empty for plain jobs.
    std::string correlation_id;
    std::string reply_to;
    // Broker-maintained: how many times this job has been handed out
    // (1 on first delivery) and when it was first enqueued.
    int attempt = 0;
    double enqueued_at_s = 0.0;

    bool operator==(const JobEnvelope&) const = default;
};

// At-least-once job queues with lease-based redelivery: a dequeued job that
// is not acked within its lease goes back to the ready list with its
// attempt count bumped; a job about to exceed the attempt limit is parked
// instead of redelivered. Enqueue is idempotent by job id (re-enqueueing a
// known, parked, or completed id is a no-op), so producers may safely be
// retried. Acks are idempotent — unknown ids warn and do nothing.
class Broker {
  public:
    virtual ~Broker() = default;

    virtual void enqueue(const std::string& queue, const JobEnvelope& envelope) = 0;

    // Blocks up to wait_s for a job. The worker holds the lease for lease_s
    // seconds; acking within that window completes the job.
    virtual std::optional<JobEnvelope> dequeue(const std::string& queue,
                                               const std::string& worker_id, double lease_s,
                                               double wait_s) = 0;

    virtual void ack(const std::string& queue, const std::string& job_id) = 0;

    // Jobs that ran out of attempts.
    virtual std::vector<JobEnvelope> parked(const std::string& queue) = 0;

    // Ready + leased (not parked, not acked).
    virtual size_t pending(const std::string& queue) = 0;
};

struct BrokerOptions {
    int max_attempts = 5;  // parked once a redelivery would exceed this
};

std::unique_ptr<Broker> make_inproc_broker(const BrokerOptions& options = {});

}  // namespace tw
