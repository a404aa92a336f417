use crate::error::{Error, Result};
use crate::layers::*;
use crate::network::NetworkSpec;
use crate::rng::Rng;
use crate::tensor::{sample_normal, Mode, Tensor};

/// The runnable network: Conv→BN→ReLU→Pool twice, flatten, then
/// FC→Dropout→FC→Dropout→FC producing one logit per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub(crate) spec: NetworkSpec,
    pub conv1: ConvParams,
    pub bn1: BatchNormState,
    pub conv2: ConvParams,
    pub bn2: BatchNormState,
    pub fc1: DenseParams,
    pub fc2: DenseParams,
    pub fc3: DenseParams,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mode: Mode,
    /// `(stage, output shape)` for each stage in execution order.
    pub shapes: Vec<(&'static str, Vec<usize>)>,
    conv1: ConvContext,
    bn1: BatchNormContext,
    relu1: ReluContext,
    pool1: PoolContext,
    conv2: ConvContext,
    bn2: BatchNormContext,
    relu2: ReluContext,
    pool2: PoolContext,
    pooled_shape: Vec<usize>,
    fc1: DenseContext,
    drop1: DropoutContext,
    fc2: DenseContext,
    drop2: DropoutContext,
    fc3: DenseContext,
}

/// Gradients of the trainable parameters, in [`Network::PARAM_NAMES`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

fn he_normal(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Result<Tensor> {
    sample_normal(rng, shape, 0.0, (2.0 / fan_in as f64).sqrt())
}

impl Network {
    pub const PARAM_NAMES: [&'static str; 14] = [
        "conv1.w",
        "conv1.b",
        "bn1.gamma",
        "bn1.beta",
        "conv2.w",
        "conv2.b",
        "bn2.gamma",
        "bn2.beta",
        "fc1.w",
        "fc1.b",
        "fc2.w",
        "fc2.b",
        "fc3.w",
        "fc3.b",
    ];

    pub const BUFFER_NAMES: [&'static str; 4] = [
        "bn1.running_mean",
        "bn1.running_var",
        "bn2.running_mean",
        "bn2.running_var",
    ];

    /// Builds a freshly initialized network: He-normal conv and dense weights
    /// (stddev √(2/fan_in)), zero biases, identity batch norm.
    pub fn build(spec: NetworkSpec, rng: &mut Rng) -> Result<Self> {
        spec.validate()?;
        let k = spec.kernel;
        let (cin, c1, c2) = (spec.input_channels, spec.conv1_filters, spec.conv2_filters);
        let flat = spec.flatten_len()?;
        let (f1, f2, n) = (spec.fc1, spec.fc2, spec.n_classes);
        Ok(Self {
            conv1: ConvParams::new(
                he_normal(rng, vec![c1, cin, k, k], cin * k * k)?,
                Tensor::zeros([c1])?,
            )?,
            bn1: BatchNormState::new(c1)?,
            conv2: ConvParams::new(
                he_normal(rng, vec![c2, c1, k, k], c1 * k * k)?,
                Tensor::zeros([c2])?,
            )?,
            bn2: BatchNormState::new(c2)?,
            fc1: DenseParams::new(he_normal(rng, vec![f1, flat], flat)?, Tensor::zeros([f1])?)?,
            fc2: DenseParams::new(he_normal(rng, vec![f2, f1], f1)?, Tensor::zeros([f2])?)?,
            fc3: DenseParams::new(he_normal(rng, vec![n, f2], f2)?, Tensor::zeros([n])?)?,
            spec,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn class_names(&self) -> &[String] {
        &self.spec.class_names
    }

    pub fn n_classes(&self) -> usize {
        self.spec.n_classes
    }

    /// Dropout rate only matters in train mode.
    pub fn set_dropout_rate(&mut self, rate: f64) -> Result<()> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Spec(format!(
                "dropout_rate must be in [0, 1), got {rate}"
            )));
        }
        self.spec.dropout_rate = rate;
        Ok(())
    }

    pub fn params(&self) -> [&Tensor; 14] {
        [
            &self.conv1.weights,
            &self.conv1.bias,
            &self.bn1.gamma,
            &self.bn1.beta,
            &self.conv2.weights,
            &self.conv2.bias,
            &self.bn2.gamma,
            &self.bn2.beta,
            &self.fc1.weights,
            &self.fc1.bias,
            &self.fc2.weights,
            &self.fc2.bias,
            &self.fc3.weights,
            &self.fc3.bias,
        ]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 14] {
        [
            &mut self.conv1.weights,
            &mut self.conv1.bias,
            &mut self.bn1.gamma,
            &mut self.bn1.beta,
            &mut self.conv2.weights,
            &mut self.conv2.bias,
            &mut self.bn2.gamma,
            &mut self.bn2.beta,
            &mut self.fc1.weights,
            &mut self.fc1.bias,
            &mut self.fc2.weights,
            &mut self.fc2.bias,
            &mut self.fc3.weights,
            &mut self.fc3.bias,
        ]
    }

    pub fn buffers(&self) -> [&Tensor; 4] {
        [
            &self.bn1.running_mean,
            &self.bn1.running_var,
            &self.bn2.running_mean,
            &self.bn2.running_var,
        ]
    }

    pub(crate) fn buffers_mut(&mut self) -> [&mut Tensor; 4] {
        [
            &mut self.bn1.running_mean,
            &mut self.bn1.running_var,
            &mut self.bn2.running_mean,
            &mut self.bn2.running_var,
        ]
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let s = &self.spec;
        match x.shape() {
            &[_, c, h, w] if c == s.input_channels && h == s.input_height && w == s.input_width => {
                Ok(())
            }
            other => Err(Error::layer(
                "input",
                format!(
                    "expected [B, {}, {}, {}], got {other:?}",
                    s.input_channels, s.input_height, s.input_width
                ),
            )),
        }
    }

    /// Train-mode forward: batch statistics (running buffers are updated) and
    /// active dropout drawing from `rng`.
    pub fn forward_train(&mut self, x: &Tensor, rng: &mut Rng) -> Result<(Tensor, ForwardTrace)> {
        let mut bn = (self.bn1.clone(), self.bn2.clone());
        let out = self.run(x, Mode::Train, rng, &mut bn)?;
        (self.bn1, self.bn2) = bn;
        Ok(out)
    }

    /// Eval-mode forward: a pure function of the input and the parameters.
    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, ForwardTrace)> {
        let mut bn = (self.bn1.clone(), self.bn2.clone());
        // Eval-mode dropout never draws.
        self.run(x, Mode::Eval, &mut Rng::new(0), &mut bn)
    }

    pub fn forward(
        &mut self,
        x: &Tensor,
        mode: Mode,
        rng: &mut Rng,
    ) -> Result<(Tensor, ForwardTrace)> {
        match mode {
            Mode::Train => self.forward_train(x, rng),
            Mode::Eval => self.forward_eval(x),
        }
    }

    fn run(
        &self,
        x: &Tensor,
        mode: Mode,
        rng: &mut Rng,
        bn: &mut (BatchNormState, BatchNormState),
    ) -> Result<(Tensor, ForwardTrace)> {
        self.check_input(x)?;
        let mut shapes = Vec::with_capacity(15);
        let mut note = |stage: &'static str, t: &Tensor| shapes.push((stage, t.shape().to_vec()));

        let (h, conv1) = conv2d_forward("conv1", x, &self.conv1)?;
        note("conv1", &h);
        let (h, bn1) = batchnorm_forward("bn1", &h, &mut bn.0, mode)?;
        note("bn1", &h);
        let (h, relu1) = relu_forward(&h);
        note("relu1", &h);
        let (h, pool1) = maxpool2x2_forward("pool1", &h)?;
        note("pool1", &h);
        let (h, conv2) = conv2d_forward("conv2", &h, &self.conv2)?;
        note("conv2", &h);
        let (h, bn2) = batchnorm_forward("bn2", &h, &mut bn.1, mode)?;
        note("bn2", &h);
        let (h, relu2) = relu_forward(&h);
        note("relu2", &h);
        let (h, pool2) = maxpool2x2_forward("pool2", &h)?;
        note("pool2", &h);
        let pooled_shape = h.shape().to_vec();
        let batch = pooled_shape[0];
        let h = h.into_reshaped([batch, self.spec.flatten_len()?])?;
        note("flatten", &h);
        let (h, fc1) = dense_forward("fc1", &h, &self.fc1)?;
        note("fc1", &h);
        let (h, drop1) = dropout_forward(&h, self.spec.dropout_rate, mode, rng)?;
        note("dropout1", &h);
        let (h, fc2) = dense_forward("fc2", &h, &self.fc2)?;
        note("fc2", &h);
        let (h, drop2) = dropout_forward(&h, self.spec.dropout_rate, mode, rng)?;
        note("dropout2", &h);
        let (logits, fc3) = dense_forward("fc3", &h, &self.fc3)?;
        note("fc3", &logits);

        Ok((
            logits,
            ForwardTrace {
                mode,
                shapes,
                conv1,
                bn1,
                relu1,
                pool1,
                conv2,
                bn2,
                relu2,
                pool2,
                pooled_shape,
                fc1,
                drop1,
                fc2,
                drop2,
                fc3,
            },
        ))
    }

    /// Parameter gradients for a train-mode trace.
    pub fn backward(&self, trace: &ForwardTrace, grad_logits: &Tensor) -> Result<Gradients> {
        if trace.mode != Mode::Train {
            return Err(Error::layer(
                "network",
                "parameter gradients need a train-mode trace",
            ));
        }
        let g3 = dense_backward("fc3", grad_logits, &trace.fc3, &self.fc3)?;
        let g = dropout_backward(&g3.input, &trace.drop2)?;
        let g2 = dense_backward("fc2", &g, &trace.fc2, &self.fc2)?;
        let g = dropout_backward(&g2.input, &trace.drop1)?;
        let g1 = dense_backward("fc1", &g, &trace.fc1, &self.fc1)?;
        let g = g1.input.clone().into_reshaped(trace.pooled_shape.clone())?;
        let g = maxpool2x2_backward(&g, &trace.pool2)?;
        let g = relu_backward(&g, &trace.relu2)?;
        let gbn2 = batchnorm_backward("bn2", &g, &trace.bn2, &self.bn2)?;
        let gc2 = conv2d_backward("conv2", &gbn2.input, &trace.conv2, &self.conv2, true)?;
        let g = maxpool2x2_backward(gc2.input.as_ref().expect("requested"), &trace.pool1)?;
        let g = relu_backward(&g, &trace.relu1)?;
        let gbn1 = batchnorm_backward("bn1", &g, &trace.bn1, &self.bn1)?;
        let gc1 = conv2d_backward("conv1", &gbn1.input, &trace.conv1, &self.conv1, false)?;

        Ok(Gradients {
            tensors: vec![
                gc1.weights,
                gc1.bias,
                gbn1.gamma,
                gbn1.beta,
                gc2.weights,
                gc2.bias,
                gbn2.gamma,
                gbn2.beta,
                g1.weights,
                g1.bias,
                g2.weights,
                g2.bias,
                g3.weights,
                g3.bias,
            ],
        })
    }

    /// Gradient of `Σ grad_logits · logits` with respect to the network input,
    /// for a trace of either mode.
    pub fn input_gradient(&self, trace: &ForwardTrace, grad_logits: &Tensor) -> Result<Tensor> {
        let g = dense_backward("fc3", grad_logits, &trace.fc3, &self.fc3)?.input;
        let g = dropout_backward(&g, &trace.drop2)?;
        let g = dense_backward("fc2", &g, &trace.fc2, &self.fc2)?.input;
        let g = dropout_backward(&g, &trace.drop1)?;
        let g = dense_backward("fc1", &g, &trace.fc1, &self.fc1)?.input;
        let g = g.into_reshaped(trace.pooled_shape.clone())?;
        let g = maxpool2x2_backward(&g, &trace.pool2)?;
        let g = relu_backward(&g, &trace.relu2)?;
        let g = match trace.mode {
            Mode::Train => batchnorm_backward("bn2", &g, &trace.bn2, &self.bn2)?.input,
            Mode::Eval => batchnorm_input_grad_eval("bn2", &g, &trace.bn2, &self.bn2)?,
        };
        let g = conv2d_backward("conv2", &g, &trace.conv2, &self.conv2, true)?
            .input
            .expect("requested");
        let g = maxpool2x2_backward(&g, &trace.pool1)?;
        let g = relu_backward(&g, &trace.relu1)?;
        let g = match trace.mode {
            Mode::Train => batchnorm_backward("bn1", &g, &trace.bn1, &self.bn1)?.input,
            Mode::Eval => batchnorm_input_grad_eval("bn1", &g, &trace.bn1, &self.bn1)?,
        };
        Ok(
            conv2d_backward("conv1", &g, &trace.conv1, &self.conv1, true)?
                .input
                .expect("requested"),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::gradcheck::relative_error;

    fn small_net(seed: u64) -> Network {
        let spec = NetworkSpec::with_class_count(3).with_input_size(16, 16);
        Network::build(spec, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn reference_shape_chain() {
        let net = Network::build(NetworkSpec::with_class_count(2), &mut Rng::new(0)).unwrap();
        let x = Tensor::zeros([1, 3, 224, 224]).unwrap();
        let (logits, trace) = net.forward_eval(&x).unwrap();
        assert_eq!(logits.shape(), &[1, 2]);
        let shape_of = |stage: &str| {
            trace
                .shapes
                .iter()
                .find(|(s, _)| *s == stage)
                .unwrap()
                .1
                .clone()
        };
        assert_eq!(shape_of("conv1"), vec![1, 6, 220, 220]);
        assert_eq!(shape_of("pool1"), vec![1, 6, 110, 110]);
        assert_eq!(shape_of("conv2"), vec![1, 16, 106, 106]);
        assert_eq!(shape_of("pool2"), vec![1, 16, 53, 53]);
        assert_eq!(shape_of("flatten"), vec![1, 44_944]);
        assert_eq!(shape_of("fc1"), vec![1, 120]);
        assert_eq!(shape_of("fc2"), vec![1, 84]);
    }

    #[test]
    fn build_rejects_tiny_inputs() {
        let spec = NetworkSpec::with_class_count(2).with_input_size(8, 8);
        assert!(Network::build(spec, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn initial_state() {
        let net = small_net(1);
        assert!(net.bn1.gamma.data().iter().all(|&v| v == 1.0));
        assert!(net.bn2.running_var.data().iter().all(|&v| v == 1.0));
        assert!(net.fc1.bias.data().iter().all(|&v| v == 0.0));
        assert_eq!(net, small_net(1));
    }

    #[test]
    fn eval_forward_is_deterministic_and_finite() {
        let net = small_net(2);
        let x: Tensor = sample_normal(&mut Rng::new(3), [2, 3, 16, 16], 0.0, 1.0).unwrap();
        let (a, _) = net.forward_eval(&x).unwrap();
        let (b, _) = net.forward_eval(&x).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        let bad = Tensor::zeros([1, 3, 15, 16]).unwrap();
        assert!(net.forward_eval(&bad).is_err());
    }

    #[test]
    fn dropout_rate_does_not_change_eval() {
        let mut net = small_net(4);
        let x: Tensor = sample_normal(&mut Rng::new(5), [1, 3, 16, 16], 0.0, 1.0).unwrap();
        let (a, _) = net.forward_eval(&x).unwrap();
        net.set_dropout_rate(0.7).unwrap();
        assert_eq!(a, net.forward_eval(&x).unwrap().0);
    }

    #[test]
    fn eval_input_gradient_matches_finite_differences() {
        // f32 network, so a loose tolerance; layer-level checks are exact in f64.
        let net = small_net(6);
        let x: Tensor = sample_normal(&mut Rng::new(7), [1, 3, 16, 16], 0.0, 1.0).unwrap();
        let (logits, trace) = net.forward_eval(&x).unwrap();
        let mut sel = Tensor::zeros_like(&logits);
        sel.data_mut()[1] = 1.0;
        let g = net.input_gradient(&trace, &sel).unwrap();
        // Probes that straddle a ReLU or pooling kink disagree; require most to agree.
        let h = 1e-2f32;
        let (mut agree, mut probed) = (0, 0);
        for i in (0..x.len()).step_by(7) {
            if g.data()[i].abs() < 1e-3 {
                continue;
            }
            let mut up = x.clone();
            up.data_mut()[i] += h;
            let mut down = x.clone();
            down.data_mut()[i] -= h;
            let num = (net.forward_eval(&up).unwrap().0.data()[1]
                - net.forward_eval(&down).unwrap().0.data()[1])
                / (2.0 * h);
            probed += 1;
            if relative_error(g.data()[i] as f64, num as f64) < 0.05 {
                agree += 1;
            }
        }
        assert!(probed > 50);
        assert!(agree as f64 >= 0.9 * probed as f64, "{agree}/{probed}");
    }
}
