#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmmna/core/errors.hpp"
#include "mmmna/core/tensor.hpp"

namespace mmmna {

using NodeId = std::size_t;

template <class T>
class Tape;

/// Handle to a value recorded on a tape.
template <class T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, NodeId id) : tape_(tape), id_(id) {}

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  NodeId id() const noexcept { return id_; }
  Tape<T>& tape() const noexcept { return *tape_; }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  Tape<T>* tape_ = nullptr;
  NodeId id_ = 0;
};

/// What a backward rule sees. `input_grads[i]` is null when input i needs no gradient;
/// otherwise the rule must add (never assign) its contribution.
template <class T>
struct BackwardContext {
  std::span<const Tensor<T>* const> inputs;
  const Tensor<T>& output;
  const Tensor<T>& grad_output;
  std::span<Tensor<T>* const> input_grads;
};

template <class T>
using BackwardFn = std::function<void(const BackwardContext<T>&)>;

/// d(loss)/d(leaf) for every leaf that requires a gradient.
template <class T>
class Gradients {
 public:
  bool contains(NodeId id) const { return grads_.contains(id); }
  const Tensor<T>& at(NodeId id) const {
    auto it = grads_.find(id);
    if (it == grads_.end()) throw ContractError("no gradient recorded for node " + std::to_string(id));
    return it->second;
  }
  const Tensor<T>& operator[](const Var<T>& v) const { return at(v.id()); }
  std::size_t size() const { return grads_.size(); }

  void insert(NodeId id, Tensor<T> g) { grads_.insert_or_assign(id, std::move(g)); }

 private:
  std::unordered_map<NodeId, Tensor<T>> grads_;
};

/// Record of executed operations for one forward pass. Nodes are appended in execution
/// order, so the record is topologically sorted by construction.
template <class T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = true) {
    check_finite("leaf", value);
    nodes_.push_back(Node{"leaf", std::move(value), {}, nullptr, requires_grad, true});
    return Var<T>(this, nodes_.size() - 1);
  }

  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  /// Appends an op node. It requires a gradient iff any input does.
  Var<T> record(const char* op, Tensor<T> value, std::vector<NodeId> inputs, BackwardFn<T> backward) {
    check_finite(op, value);
    bool needs = false;
    for (NodeId in : inputs) {
      if (in >= nodes_.size()) throw ContractError(std::string(op) + ": input node not on this tape");
      needs = needs || nodes_[in].requires_grad;
    }
    nodes_.push_back(Node{op, std::move(value), std::move(inputs), needs ? std::move(backward) : nullptr,
                          needs, false});
    return Var<T>(this, nodes_.size() - 1);
  }

  const Tensor<T>& value(NodeId id) const { return nodes_.at(id).value; }
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Reverse sweep from a scalar loss. Each node is visited once; fan-out accumulates.
  Gradients<T> backward(const Var<T>& loss) {
    if (&loss.tape() != this) throw ContractError("backward: loss is not on this tape");
    if (loss.value().size() != 1) {
      throw ContractError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    std::vector<Tensor<T>> grads(loss.id() + 1);
    std::vector<bool> has(loss.id() + 1, false);
    grads[loss.id()] = Tensor<T>::ones(loss.shape());
    has[loss.id()] = true;

    Gradients<T> result;
    std::vector<const Tensor<T>*> in_values;
    std::vector<Tensor<T>*> in_grads;
    for (NodeId id = loss.id() + 1; id-- > 0;) {
      Node& node = nodes_[id];
      if (!node.requires_grad) continue;
      if (node.is_leaf) {
        result.insert(id, has[id] ? std::move(grads[id]) : Tensor<T>::zeros(node.value.shape()));
        continue;
      }
      if (!has[id]) continue;
      in_values.clear();
      in_grads.clear();
      for (NodeId in : node.inputs) {
        in_values.push_back(&nodes_[in].value);
        if (nodes_[in].requires_grad) {
          if (!has[in]) {
            grads[in] = Tensor<T>::zeros(nodes_[in].value.shape());
            has[in] = true;
          }
          in_grads.push_back(&grads[in]);
        } else {
          in_grads.push_back(nullptr);
        }
      }
      node.backward(BackwardContext<T>{in_values, node.value, grads[id], in_grads});
      for (Tensor<T>* g : in_grads) {
        if (g != nullptr) check_finite_backward(node.op, *g);
      }
      grads[id] = Tensor<T>();
      has[id] = false;
    }
    // Leaves recorded after the loss cannot influence it.
    for (NodeId id = loss.id() + 1; id < nodes_.size(); ++id) {
      if (nodes_[id].is_leaf && nodes_[id].requires_grad) {
        result.insert(id, Tensor<T>::zeros(nodes_[id].value.shape()));
      }
    }
    return result;
  }

 private:
  struct Node {
    const char* op;
    Tensor<T> value;
    std::vector<NodeId> inputs;
    BackwardFn<T> backward;
    bool requires_grad;
    bool is_leaf;
  };

  static void check_finite(const char* op, const Tensor<T>& v) {
    if (!v.all_finite()) throw NumericError(std::string(op) + ": non-finite value in forward pass");
  }
  static void check_finite_backward(const char* op, const Tensor<T>& g) {
    if (!g.all_finite()) throw NumericError(std::string(op) + ": non-finite gradient in backward pass");
  }

  std::deque<Node> nodes_;  // stable addresses: values are referenced across appends
};

}  // namespace mmmna
