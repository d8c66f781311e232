#include "tw/broker.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <iostream>
#include <map>
#include <mutex>
#include <set>

namespace tw {

namespace {

using Clock = std::chrono::steady_clock;

double now_s() {
    return std::chrono::duration<double>(Clock::now().time_since_epoch()).count();
}

struct JobState {
    JobEnvelope envelope;
    int deliveries = 0;
    bool leased = false;
    double lease_deadline_s = 0.0;
};

struct QueueState {
    std::deque<std::string> ready;
    std::map<std::string, JobState> jobs;  // every un-acked, un-parked job
    std::vector<JobEnvelope> parked;
    std::set<std::string> completed;  // acked ids, so re-enqueues stay no-ops
};

class InProcBroker final : public Broker {
  public:
    explicit InProcBroker(const BrokerOptions& options) : options_(options) {}

    void enqueue(const std::string& queue, const JobEnvelope& envelope) override {
        std::lock_guard lock(mutex_);
        QueueState& q = queues_[queue];
        // Idempotent by job id: a producer that is retried after a crash may
        // enqueue the same job again, and that must not double-deliver it,
        // reset its attempt count, or resurrect it once done.
        if (q.jobs.contains(envelope.job_id) || q.completed.contains(envelope.job_id) ||
            std::any_of(q.parked.begin(), q.parked.end(),
                        [&](const JobEnvelope& e) { return e.job_id == envelope.job_id; })) {
            return;
        }
        JobEnvelope stored = envelope;
        stored.attempt = 0;
        stored.enqueued_at_s = now_s();
        q.jobs[stored.job_id] = JobState{std::move(stored)};
        q.ready.push_back(envelope.job_id);
        cv_.notify_one();
    }

    std::optional<JobEnvelope> dequeue(const std::string& queue, const std::string&,
                                       double lease_s, double wait_s) override {
        std::unique_lock lock(mutex_);
        const auto deadline =
            Clock::now() +
            std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(wait_s));
        for (;;) {
            QueueState& q = queues_[queue];
            reclaim_expired(q);
            if (!q.ready.empty()) {
                const std::string id = q.ready.front();
                q.ready.pop_front();
                JobState& job = q.jobs.at(id);
                job.deliveries += 1;
                job.leased = true;
                job.lease_deadline_s = now_s() + lease_s;
                JobEnvelope out = job.envelope;
                out.attempt = job.deliveries;
                return out;
            }
            if (Clock::now() >= deadline) return std::nullopt;
            // Wake periodically so expired leases get reclaimed even when
            // nothing is enqueued in the meantime.
            cv_.wait_until(lock, std::min(deadline, Clock::now() + std::chrono::milliseconds(5)));
        }
    }

    void ack(const std::string& queue, const std::string& job_id) override {
        std::lock_guard lock(mutex_);
        QueueState& q = queues_[queue];
        if (auto it = q.jobs.find(job_id); it != q.jobs.end()) {
            std::erase(q.ready, job_id);
            q.jobs.erase(it);
            q.completed.insert(job_id);
            return;
        }
        // A slow worker may complete a job after it was parked; honor the
        // ack so the job is not reported as both done and failed.
        if (auto it = std::find_if(q.parked.begin(), q.parked.end(),
                                   [&](const JobEnvelope& e) { return e.job_id == job_id; });
            it != q.parked.end()) {
            q.parked.erase(it);
            q.completed.insert(job_id);
            return;
        }
        if (q.completed.contains(job_id)) return;  // duplicate ack
        std::cerr << "broker: ack for unknown job '" << job_id << "' on queue '" << queue
                  << "' ignored\n";
    }

    std::vector<JobEnvelope> parked(const std::string& queue) override {
        std::lock_guard lock(mutex_);
        QueueState& q = queues_[queue];
        reclaim_expired(q);
        return q.parked;
    }

    size_t pending(const std::string& queue) override {
        std::lock_guard lock(mutex_);
        QueueState& q = queues_[queue];
        reclaim_expired(q);
        return q.jobs.size();
    }

  private:
    void reclaim_expired(QueueState& q) {
        const double now = now_s();
        for (auto it = q.jobs.begin(); it != q.jobs.end();) {
            JobState& job = it->second;
            if (job.leased && job.lease_deadline_s <= now) {
                job.leased = false;
                if (job.deliveries >= options_.max_attempts) {
                    JobEnvelope dead = job.envelope;
                    dead.attempt = job.deliveries;
                    q.parked.push_back(std::move(dead));
                    it = q.jobs.erase(it);
                    continue;
                }
                q.ready.push_back(it->first);
                cv_.notify_one();
            }
            ++it;
        }
    }

    BrokerOptions options_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::map<std::string, QueueState> queues_;
};

}  // namespace

std::unique_ptr<Broker> make_inproc_broker(const BrokerOptions& options) {
    return std::make_unique<InProcBroker>(options);
}

}  // namespace tw
