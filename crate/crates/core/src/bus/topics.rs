use std::collections::BTreeMap;

use super::BusError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Inbound,
    Outbound,
    Duplex,
}

impl Direction {
    fn outbound(self) -> bool {
        matches!(self, Direction::Outbound | Direction::Duplex)
    }

    fn inbound(self) -> bool {
        matches!(self, Direction::Inbound | Direction::Duplex)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicInfo {
    pub direction: Direction,
    pub schema: &'static str,
}

/// Topics an endpoint may use, fixed at startup.
#[derive(Debug, Clone, Default)]
pub struct TopicRegistry {
    topics: BTreeMap<String, TopicInfo>,
}

impl TopicRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, topic: &str, direction: Direction, schema: &'static str) -> Result<(), BusError> {
        if topic.is_empty() {
            return Err(BusError::EmptyTopic);
        }
        if topic.len() > super::MAX_TOPIC_LEN {
            return Err(BusError::TopicTooLong(topic.len()));
        }
        self.topics.insert(topic.to_owned(), TopicInfo { direction, schema });
        Ok(())
    }

    pub fn with(mut self, topic: &str, direction: Direction, schema: &'static str) -> Self {
        self.register(topic, direction, schema).expect("static topic name");
        self
    }

    pub fn get(&self, topic: &str) -> Option<&TopicInfo> {
        self.topics.get(topic)
    }

    pub fn check_outbound(&self, topic: &str) -> Result<(), BusError> {
        match self.topics.get(topic) {
            Some(info) if info.direction.outbound() => Ok(()),
            Some(_) => Err(BusError::WrongDirection(topic.to_owned())),
            None => Err(BusError::Unregistered(topic.to_owned())),
        }
    }

    pub fn check_inbound(&self, topic: &str) -> Result<(), BusError> {
        match self.topics.get(topic) {
            Some(info) if info.direction.inbound() => Ok(()),
            Some(_) => Err(BusError::WrongDirection(topic.to_owned())),
            None => Err(BusError::Unregistered(topic.to_owned())),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &TopicInfo)> {
        self.topics.iter().map(|(k, v)| (k.as_str(), v))
    }
}
