#pragma once

#include "mmmna/core/errors.hpp"
#include "mmmna/core/gradcheck.hpp"
#include "mmmna/core/kernels.hpp"
#include "mmmna/core/ops.hpp"
#include "mmmna/core/tape.hpp"
#include "mmmna/core/tensor.hpp"
#include "mmmna/data/augment.hpp"
#include "mmmna/data/folds.hpp"
#include "mmmna/data/mmv_io.hpp"
#include "mmmna/data/phantom.hpp"
#include "mmmna/data/resample.hpp"
#include "mmmna/data/subject.hpp"
#include "mmmna/data/survival.hpp"
#include "mmmna/fusion/attention.hpp"
#include "mmmna/fusion/mnaffm.hpp"
#include "mmmna/fusion/positional_encoding.hpp"
#include "mmmna/harness/ablation.hpp"
#include "mmmna/harness/checkpoint.hpp"
#include "mmmna/harness/cli.hpp"
#include "mmmna/harness/cross_validation.hpp"
#include "mmmna/harness/gradcheck_suite.hpp"
#include "mmmna/harness/mcnemar.hpp"
#include "mmmna/harness/metrics.hpp"
#include "mmmna/harness/report.hpp"
#include "mmmna/harness/train_config.hpp"
#include "mmmna/harness/trainer.hpp"
#include "mmmna/modality.hpp"
#include "mmmna/model/backbone.hpp"
#include "mmmna/model/config.hpp"
#include "mmmna/model/inputs.hpp"
#include "mmmna/model/losses.hpp"
#include "mmmna/model/mmmna.hpp"
#include "mmmna/nn/adam.hpp"
#include "mmmna/nn/batchnorm.hpp"
#include "mmmna/nn/conv3d.hpp"
#include "mmmna/nn/init.hpp"
#include "mmmna/nn/linear.hpp"
#include "mmmna/nn/params.hpp"
#include "mmmna/nn/pool.hpp"
