#pragma once

#include "stance/error.hpp"
#include "stance/label.hpp"
#include "stance/thread.hpp"
#include "stance/text.hpp"
#include "stance/embeddings.hpp"
#include "stance/features.hpp"
#include "stance/lbfgs.hpp"
#include "stance/json_io.hpp"
#include "stance/hawkes.hpp"
#include "stance/crf.hpp"
#include "stance/maxent.hpp"
#include "stance/branch_lstm.hpp"
#include "stance/metrics.hpp"
#include "stance/evaluation.hpp"
#include "stance/config.hpp"
#include "stance/pheme.hpp"
#include "stance/synthetic.hpp"
