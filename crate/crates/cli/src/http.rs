use std::io::Read as _;
use std::time::Duration;

use hetddi::pipeline::{Transport, TransportError};

const MAX_BODY: u64 = 16 << 20;

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new() -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .user_agent(concat!("hetddi/", env!("CARGO_PKG_VERSION")))
            .build();
        Self { agent }
    }
}

impl Transport for UreqTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, TransportError> {
        match self.agent.get(url).call() {
            Ok(resp) => {
                let mut body = Vec::new();
                resp.into_reader()
                    .take(MAX_BODY)
                    .read_to_end(&mut body)
                    .map_err(|e| TransportError::Network(e.to_string()))?;
                Ok(body)
            }
            Err(ureq::Error::Status(404, _)) => Err(TransportError::NotFound),
            Err(ureq::Error::Status(code, _)) => Err(TransportError::Status(code)),
            Err(e) => Err(TransportError::Network(e.to_string())),
        }
    }
}
