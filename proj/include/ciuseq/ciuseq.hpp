#pragma once

#include "ciuseq/chat.hpp"
#include "ciuseq/checkpoint.hpp"
#include "ciuseq/ciu.hpp"
#include "ciuseq/dataset.hpp"
#include "ciuseq/dictionary.hpp"
#include "ciuseq/error.hpp"
#include "ciuseq/eval.hpp"
#include "ciuseq/graph.hpp"
#include "ciuseq/loss.hpp"
#include "ciuseq/model.hpp"
#include "ciuseq/rng.hpp"
#include "ciuseq/stats.hpp"
#include "ciuseq/synth.hpp"
#include "ciuseq/tensor.hpp"
#include "ciuseq/text.hpp"
#include "ciuseq/train.hpp"
