#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edei/core.hpp"

namespace edei {

enum class AssignmentStatus : std::uint8_t { Pending = 0, InProgress = 1, Done = 2, Failed = 3 };

inline bool is_terminal(AssignmentStatus s) { return s == AssignmentStatus::Done || s == AssignmentStatus::Failed; }

struct Assignment {
  NodeId node;
  int deadline = 0;          // last step at which completion still counts
  std::int64_t value = 0;    // asset count when issued
  AssignmentStatus status = AssignmentStatus::Pending;
  int work_done = 0;
  int completed_at = -1;

  bool operator==(const Assignment&) const = default;
};

struct StatusEvent {
  int step = 0;
  std::size_t index = 0;
  AssignmentStatus status = AssignmentStatus::Pending;

  bool operator==(const StatusEvent&) const = default;
};

/// Ascending deadline, ties by node id. Stable.
inline std::vector<Assignment> order_queue(std::vector<Assignment> queue) {
  std::stable_sort(queue.begin(), queue.end(), [](const Assignment& a, const Assignment& b) {
    if (a.deadline != b.deadline) return a.deadline < b.deadline;
    return a.node < b.node;
  });
  return queue;
}

/// The primary assignment sequence O with its completion record.
/// Statuses only move forward; Done and Failed are terminal.
class AssignmentLog {
 public:
  AssignmentLog() = default;

  explicit AssignmentLog(std::vector<Assignment> queue) : items_(order_queue(std::move(queue))) {
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (!by_node_.emplace(items_[i].node.index, i).second)
        throw ValidationError("assignment log: node " + std::to_string(items_[i].node.index) + " has two assignments");
    }
  }

  std::size_t size() const { return items_.size(); }
  const std::vector<Assignment>& items() const { return items_; }
  const Assignment& operator[](std::size_t i) const { return items_.at(i); }
  const std::vector<StatusEvent>& history() const { return history_; }

  std::optional<std::size_t> find(NodeId node) const {
    auto it = by_node_.find(node.index);
    if (it == by_node_.end()) return std::nullopt;
    return it->second;
  }

  bool pending(std::size_t i) const { return !is_terminal(items_.at(i).status); }

  /// The not-yet-finished nodes, Lambda, in queue order.
  std::vector<NodeId> pending_nodes() const {
    std::vector<NodeId> out;
    for (const auto& a : items_)
      if (!is_terminal(a.status)) out.push_back(a.node);
    return out;
  }

  std::size_t count(AssignmentStatus s) const {
    return static_cast<std::size_t>(std::count_if(items_.begin(), items_.end(), [s](const Assignment& a) { return a.status == s; }));
  }
  std::size_t pending_count() const { return size() - count(AssignmentStatus::Done) - count(AssignmentStatus::Failed); }

  void set_status(std::size_t i, AssignmentStatus s, int step) {
    Assignment& a = items_.at(i);
    if (a.status == s) return;
    if (is_terminal(a.status)) throw ActionRejected("assignment log: assignment " + std::to_string(i) + " is already final");
    a.status = s;
    if (s == AssignmentStatus::Done) a.completed_at = step;
    history_.push_back({step, i, s});
  }

  /// Adds work units to assignment i; completes it once `required` units are
  /// accumulated. Returns true on completion.
  bool add_work(std::size_t i, int units, int required, int step) {
    Assignment& a = items_.at(i);
    if (is_terminal(a.status) || units <= 0) return false;
    a.work_done += units;
    if (a.work_done >= required) {
      set_status(i, AssignmentStatus::Done, step);
      return true;
    }
    set_status(i, AssignmentStatus::InProgress, step);
    return false;
  }

  bool operator==(const AssignmentLog& o) const { return items_ == o.items_ && history_ == o.history_; }

 private:
  std::vector<Assignment> items_;
  std::map<std::uint32_t, std::size_t> by_node_;
  std::vector<StatusEvent> history_;
};

/// Fails every unfinished assignment whose deadline is before step t.
/// Completion at t == deadline still counts. Returns the failed indices.
inline std::vector<std::size_t> tick_deadlines(AssignmentLog& log, int t) {
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (log.pending(i) && log[i].deadline < t) {
      log.set_status(i, AssignmentStatus::Failed, t);
      failed.push_back(i);
    }
  }
  return failed;
}

/// Fails unfinished assignments whose node lost all its assets.
inline std::vector<std::size_t> fail_on_incident(AssignmentLog& log, std::span<const NodeId> scrapped, int t) {
  std::vector<std::size_t> failed;
  for (NodeId n : scrapped) {
    if (auto i = log.find(n); i && log.pending(*i)) {
      log.set_status(*i, AssignmentStatus::Failed, t);
      failed.push_back(*i);
    }
  }
  return failed;
}

/// Sum of the values of completed assignments.
inline std::int64_t completion_value(const AssignmentLog& log) {
  std::int64_t total = 0;
  for (const auto& a : log.items())
    if (a.status == AssignmentStatus::Done) total += a.value;
  return total;
}

}  // namespace edei
