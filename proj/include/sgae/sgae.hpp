#pragma once

#include "sgae/checkpoint.hpp"
#include "sgae/corpus.hpp"
#include "sgae/decoder.hpp"
#include "sgae/dictionary.hpp"
#include "sgae/errors.hpp"
#include "sgae/gcn.hpp"
#include "sgae/grad_check.hpp"
#include "sgae/graph_conv.hpp"
#include "sgae/layers.hpp"
#include "sgae/metrics.hpp"
#include "sgae/mgcn.hpp"
#include "sgae/models.hpp"
#include "sgae/optim.hpp"
#include "sgae/rng.hpp"
#include "sgae/scene_graph.hpp"
#include "sgae/synthetic.hpp"
#include "sgae/tensor.hpp"
#include "sgae/trainer.hpp"
#include "sgae/vocabulary.hpp"
