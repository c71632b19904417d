#pragma once

// Training state for one run: model and momentum copy, feature queues,
// optimizer, knowledge resources and data, with pretraining steps and
// checkpointing.

#include "motor/config.hpp"
#include "motor/corpus.hpp"
#include "motor/feature_queue.hpp"
#include "motor/injection.hpp"
#include "motor/objectives.hpp"
#include "motor/optimizer.hpp"

#include <iosfwd>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace motor {

struct StepLog {
  long step = 0;
  double total = 0, itc = 0, itm = 0, lm = 0, mlc = 0, tau = 0;
};

/// CSV header for StepLog rows.
inline constexpr const char* kLossCsvHeader = "step,L,L_itc,L_itm,L_lm,L_mlc,tau";
std::string to_csv(const StepLog& log);

/// Knowledge files and vocabulary shared by every model in a run.
struct Resources {
  KnowledgeGraph graph;
  Tokenizer tokenizer;
  EntityLexicon lexicon;
  TripletStore store;
  LabelSet labels;

  static Resources load(const RunConfig& cfg);
};

class Session {
 public:
  /// Fresh model initialized from cfg.seed.
  Session(RunConfig cfg, std::shared_ptr<const Resources> res, std::shared_ptr<const Dataset> data);

  const RunConfig& config() const { return cfg_; }
  RunConfig& mutable_config() { return cfg_; }
  const Resources& resources() const { return *res_; }
  const Dataset& data() const { return *data_; }
  MotorModel& model() { return *model_; }
  const MotorModel& model() const { return *model_; }
  MotorModel& momentum_model() { return *momentum_; }
  const FeatureQueue& report_queue() const { return report_queue_; }
  FeatureQueue& report_queue() { return report_queue_; }
  const FeatureQueue& image_queue() const { return image_queue_; }
  const FeatureQueue& text_queue() const { return text_queue_; }
  std::mt19937_64& rng() { return rng_; }
  long step() const { return step_; }

  KnowledgeBase knowledge() const;
  InjectionOptions injection_options(bool retrieve) const;

  /// Next training batch (record indices), epoch-shuffled without replacement.
  std::vector<int> next_batch(int size);

  /// Which losses a training step optimizes. ITM needs ITC (its negatives
  /// are sampled from the contrastive similarities).
  struct Objectives {
    bool itc = true;
    bool itm = true;
    bool lm = true;
    bool mlc = true;
  };

  /// One optimization step. Throws NumericError before touching parameters
  /// when a loss is not finite.
  StepLog train_step(const Objectives& objectives, int batch_size = 0);
  StepLog pretrain_step() { return train_step(Objectives{}); }

  /// Runs cfg.steps pretraining steps, appending CSV rows to `log` when given.
  void pretrain(std::ostream* log);

  /// Task finetuning uses its own optimizer; installing one resets moments.
  AdamW& optimizer() { return *opt_; }
  void set_optimizer(AdamWConfig cfg, std::vector<std::string> trainable);

  void save(const std::string& path) const;
  /// Restores everything written by save(); the config echo must match in
  /// model shape.
  /// The configuration echoed into a checkpoint, without loading weights.
  static RunConfig read_config(const std::string& path);
  static Session load(const std::string& path, std::shared_ptr<const Resources> res, std::shared_ptr<const Dataset> data);

  /// Free-form string entries saved with the checkpoint (e.g. answer vocabularies).
  std::map<std::string, std::string>& metadata() { return metadata_; }
  const std::map<std::string, std::string>& metadata() const { return metadata_; }

  /// Token sequences for a list of record indices.
  std::vector<std::vector<int>> tokens_of(const std::vector<int>& idx, TokenMode mode) const;
  Matrix labels_of(const std::vector<int>& idx) const;

 private:
  Session(RunConfig cfg, std::shared_ptr<const Resources> res, std::shared_ptr<const Dataset> data, bool init);

  RunConfig cfg_;
  std::shared_ptr<const Resources> res_;
  std::shared_ptr<const Dataset> data_;
  std::unique_ptr<MotorModel> model_;
  std::unique_ptr<MotorModel> momentum_;
  FeatureQueue image_queue_;
  FeatureQueue text_queue_;
  FeatureQueue report_queue_;
  std::unique_ptr<AdamW> opt_;
  std::mt19937_64 rng_;
  long step_ = 0;
  std::vector<int> epoch_order_;
  std::size_t epoch_cursor_ = 0;
  std::map<std::string, std::string> metadata_;
};

/// Reads corpus.jsonl from the configured data directory.
std::shared_ptr<const Dataset> load_corpus(const RunConfig& cfg, const std::string& file = "corpus.jsonl");

}  // namespace motor
